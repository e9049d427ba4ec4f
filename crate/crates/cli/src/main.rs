use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use coexlab::access::{analytical_throughput, solve_coexistence_fixed_point, FixedPointOptions};
use coexlab::harness::{
    self, detect_stabilization, emit_report, load_config, read_reward_trace, run_seed, run_single, run_suite,
    summary_text, write_training_log, ExperimentConfig, Sweep,
};
use coexlab::sim::{reseed, run_window};
use coexlab::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUN: u8 = 3;
const EXIT_ORDERING: u8 = 4;

#[derive(Parser)]
#[command(name = "coexlab", version, about = "NR-U / Wi-Fi coexistence laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment file (JSON). Built-in defaults fill every omitted key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled chains and print the operating point as CSV.
    FixedPoint {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one observation window at the initial TXOP.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the configured scheme once and write its training log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the configured grid and write the report bundle.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides `trials`.
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        parallel: usize,
        /// Exit with status 4 if an ordering check fails.
        #[arg(long)]
        check: bool,
    },
    /// Print the stabilization episode of a reward trace CSV.
    Stabilize {
        /// CSV with a `mean_reward` column, or a single column of rewards.
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::from_settings(harness::Settings::defaults())?,
    };
    if let Some(seed) = common.seed {
        cfg.settings.base_seed = seed;
        cfg = cfg.cell(cfg.scheme, cfg.priority_class, cfg.n_pairs)?;
    }
    Ok(cfg)
}

fn fixed_point(cfg: &ExperimentConfig) -> Result<()> {
    let nru = cfg.sim.nru.with_txop(cfg.txop.t_nr);
    let (n_wifi, n_nru) = (cfg.sim.n_wifi, cfg.sim.n_nru);
    let op = solve_coexistence_fixed_point(n_wifi, n_nru, &cfg.sim.wifi, &nru, &FixedPointOptions::default())?;
    let (g_nr, g_wf) = analytical_throughput(&op, n_wifi, n_nru, &cfg.sim.wifi, &nru);
    println!("n_wifi,n_nru,t_nr_us,tau_wf,tau_nr,p_w,p_l,gamma_nr_mbps,gamma_wf_mbps,residual,iterations");
    println!(
        "{n_wifi},{n_nru},{},{},{},{},{},{},{},{:e},{}",
        cfg.txop.t_nr, op.tau_wf, op.tau_nr, op.p_w, op.p_l, g_nr, g_wf, op.residual, op.iterations
    );
    Ok(())
}

fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    let m = run_window(&reseed(&cfg.sim, cfg.base_seed), cfg.txop.t_nr);
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let seed = run_seed(cfg.base_seed, cfg.scheme, cfg.priority_class, cfg.n_pairs, 0);
    let log = run_single(cfg, seed)?;
    let path = out.join(format!(
        "training_{}_p{}_n{}.csv",
        cfg.scheme, cfg.priority_class, cfg.n_pairs
    ));
    write_training_log(std::fs::File::create(&path)?, &log)?;
    let t_star = detect_stabilization(&log.rewards(), &cfg.stabilization).ok().flatten();
    println!("wrote {}", path.display());
    println!(
        "stabilization_episode: {}",
        t_star.map_or_else(|| "none".to_string(), |t| t.to_string())
    );
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, out: &Path, parallel: usize, check: bool) -> Result<u8> {
    let bundle = run_suite(cfg, &Sweep::from_settings(&cfg.settings), parallel)?;
    emit_report(&bundle, out)?;
    print!("{}", summary_text(&bundle));
    if bundle.runs.iter().any(|r| r.outcome.is_err()) {
        return Ok(EXIT_RUN);
    }
    if check && !bundle.orderings_pass() {
        return Ok(EXIT_ORDERING);
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::FixedPoint { common } => fixed_point(&load(&common)?)?,
        Command::Simulate { common } => simulate(&load(&common)?)?,
        Command::Train { common, out } => train(&load(&common)?, &out)?,
        Command::Sweep {
            common,
            out,
            trials,
            parallel,
            check,
        } => {
            let mut cfg = load(&common)?;
            if let Some(t) = trials {
                cfg.settings.trials = t;
                cfg = cfg.cell(cfg.scheme, cfg.priority_class, cfg.n_pairs)?;
            }
            return sweep(&cfg, &out, parallel, check);
        }
        Command::Stabilize { input, config } => {
            let crit = match config {
                Some(p) => load_config(&p)?.stabilization,
                None => Default::default(),
            };
            let rewards = read_reward_trace(&input)?;
            match detect_stabilization(&rewards, &crit)? {
                Some(t) => println!("{t}"),
                None => println!("none"),
            }
        }
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Validation(_) | Error::Parse(_) | Error::InsufficientData { .. }) => EXIT_VALIDATION,
        _ => EXIT_RUN,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
