//! Sweep orchestration and aggregation.

use rayon::prelude::*;
use serde::Serialize;

use super::{detect_stabilization, ExperimentConfig, Scheme, Settings};
use crate::agents::{train, TrainLog};
use crate::env::CoexEnv;
use crate::metrics::utility_fairness;
use crate::rng;
use crate::Result;

/// Seed of one run: `base_seed` XOR a SplitMix64 hash of the run coordinates.
pub fn run_seed(base_seed: u64, scheme: Scheme, priority: u8, n_pairs: usize, trial: usize) -> u64 {
    let scheme_id = Scheme::ALL.iter().position(|&s| s == scheme).unwrap_or(0) as u64;
    base_seed ^ rng::derive_seed(0, &[scheme_id, priority as u64, n_pairs as u64, trial as u64])
}

/// Train one run of `cfg` with `seed`.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<TrainLog> {
    let mut env = CoexEnv::new(
        crate::sim::reseed(&cfg.sim, seed),
        cfg.txop,
        cfg.policy,
        cfg.utility.clone(),
        rng::derive_seed(seed, &[0]),
    )?;
    train(
        &mut env,
        cfg.scheme.agent_kind(),
        &cfg.agent,
        rng::derive_seed(seed, &[1]),
    )
}

/// Tail averages of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub agg_throughput_mbps: f64,
    pub gamma_nr_mbps: f64,
    pub gamma_wf_mbps: f64,
    pub jain: f64,
    pub mean_utility: f64,
    pub utility_fairness: f64,
    /// 1-based episode, if the reward trace stabilized.
    pub stabilization_episode: Option<usize>,
}

pub fn summarize(log: &TrainLog, tail: usize, crit: &super::StabilizationCriterion) -> RunSummary {
    let recs = log.tail(tail);
    let n = recs.len().max(1) as f64;
    let mean = |f: &dyn Fn(&crate::agents::EpisodeRecord) -> f64| recs.iter().map(f).sum::<f64>() / n;
    RunSummary {
        agg_throughput_mbps: mean(&|r| r.gamma_nr_mbps + r.gamma_wf_mbps),
        gamma_nr_mbps: mean(&|r| r.gamma_nr_mbps),
        gamma_wf_mbps: mean(&|r| r.gamma_wf_mbps),
        jain: mean(&|r| r.jain),
        mean_utility: mean(&|r| 0.5 * (r.u_nr + r.u_wf)),
        utility_fairness: mean(&|r| utility_fairness(r.u_nr, r.u_wf).unwrap_or(f64::NAN)),
        stabilization_episode: detect_stabilization(&log.rewards(), crit).ok().flatten(),
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scheme: Scheme,
    pub priority: u8,
    pub n_pairs: usize,
    pub trial: usize,
    pub seed: u64,
    pub outcome: std::result::Result<(RunSummary, TrainLog), String>,
    /// Wall-clock training time; informational only, never written to CSV.
    pub wall_seconds: f64,
}

impl RunRecord {
    pub fn summary(&self) -> Option<&RunSummary> {
        self.outcome.as_ref().ok().map(|(s, _)| s)
    }
}

/// Grid axes of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub n_pairs: Vec<usize>,
    pub priorities: Vec<u8>,
    pub schemes: Vec<Scheme>,
}

impl Sweep {
    pub fn from_settings(s: &Settings) -> Self {
        Self {
            n_pairs: s.sweep.n_pairs.clone(),
            priorities: s.sweep.priorities.clone(),
            schemes: s.sweep.schemes.clone(),
        }
    }
}

/// Mean of one scheme's tail metrics over the successful trials of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellMean {
    pub scheme: Scheme,
    pub priority: u8,
    pub n_pairs: usize,
    pub trials_ok: usize,
    pub agg_throughput_mbps: f64,
    pub jain: f64,
    pub mean_utility: f64,
    pub utility_fairness: f64,
}

/// Outcome of one ordering test (`a > b > ...` with a relative margin).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub metric: &'static str,
    pub priority: u8,
    pub n_pairs: usize,
    pub order: Vec<Scheme>,
    pub values: Vec<f64>,
    pub pass: bool,
    /// Where MAB falls in the same metric, as 0-based rank among the ordered
    /// schemes plus MAB (highest first), if it was run.
    pub mab_rank: Option<usize>,
}

impl OrderingCheck {
    pub fn label(&self) -> String {
        self.order.iter().map(|s| s.label()).collect::<Vec<_>>().join(">")
    }
}

pub const FAIRNESS_ORDER: [Scheme; 4] = [Scheme::Q1, Scheme::Q2, Scheme::Q2u, Scheme::Lbt];
pub const THROUGHPUT_ORDER: [Scheme; 4] = [Scheme::Lbt, Scheme::Q2u, Scheme::Q2, Scheme::Q1];

/// Every earlier value exceeds every later one by at least `margin`
/// relative to the later value.
pub fn strictly_ordered(values: &[f64], margin: f64) -> bool {
    values.iter().enumerate().all(|(i, &a)| {
        values[i + 1..]
            .iter()
            .all(|&b| a.is_finite() && b.is_finite() && a >= b * (1.0 + margin) && a > b)
    })
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub settings: Settings,
    pub defaulted: Vec<String>,
    pub sweep: Sweep,
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellMean>,
    pub orderings: Vec<OrderingCheck>,
}

impl ReportBundle {
    pub fn orderings_pass(&self) -> bool {
        self.orderings.iter().all(|o| o.pass)
    }

    pub fn cell(&self, scheme: Scheme, priority: u8, n_pairs: usize) -> Option<&CellMean> {
        self.cells
            .iter()
            .find(|c| c.scheme == scheme && c.priority == priority && c.n_pairs == n_pairs)
    }
}

fn aggregate(runs: &[RunRecord], sweep: &Sweep) -> Vec<CellMean> {
    let mut cells = Vec::new();
    for &priority in &sweep.priorities {
        for &n_pairs in &sweep.n_pairs {
            for &scheme in &sweep.schemes {
                let ok: Vec<&RunSummary> = runs
                    .iter()
                    .filter(|r| r.scheme == scheme && r.priority == priority && r.n_pairs == n_pairs)
                    .filter_map(RunRecord::summary)
                    .collect();
                if ok.is_empty() {
                    continue;
                }
                let n = ok.len() as f64;
                let mean = |f: fn(&RunSummary) -> f64| ok.iter().map(|s| f(s)).sum::<f64>() / n;
                cells.push(CellMean {
                    scheme,
                    priority,
                    n_pairs,
                    trials_ok: ok.len(),
                    agg_throughput_mbps: mean(|s| s.agg_throughput_mbps),
                    jain: mean(|s| s.jain),
                    mean_utility: mean(|s| s.mean_utility),
                    utility_fairness: mean(|s| s.utility_fairness),
                });
            }
        }
    }
    cells
}

type OrderingSpec = (&'static str, [Scheme; 4], fn(&CellMean) -> f64);

fn ordering_checks(cells: &[CellMean], sweep: &Sweep, margin: f64) -> Vec<OrderingCheck> {
    let mut out = Vec::new();
    for &priority in &sweep.priorities {
        for &n_pairs in &sweep.n_pairs {
            let get = |s: Scheme| {
                cells
                    .iter()
                    .find(|c| c.scheme == s && c.priority == priority && c.n_pairs == n_pairs)
            };
            let specs: [OrderingSpec; 2] = [
                ("fairness", FAIRNESS_ORDER, |c| c.jain),
                ("throughput", THROUGHPUT_ORDER, |c| c.agg_throughput_mbps),
            ];
            for (metric, order, value) in specs {
                let Some(found) = order.iter().map(|&s| get(s)).collect::<Option<Vec<_>>>() else {
                    continue;
                };
                let values: Vec<f64> = found.iter().map(|c| value(c)).collect();
                let mab_rank = get(Scheme::Mab).map(|m| values.iter().filter(|&&v| v > value(m)).count());
                out.push(OrderingCheck {
                    metric,
                    priority,
                    n_pairs,
                    order: order.to_vec(),
                    pass: strictly_ordered(&values, margin),
                    values,
                    mab_rank,
                });
            }
        }
    }
    out
}

/// Run every (priority, n_pairs, scheme, trial) of `sweep` on `threads`
/// workers (0 means rayon's default). Failures are recorded per run.
pub fn run_suite(cfg: &ExperimentConfig, sweep: &Sweep, threads: usize) -> Result<ReportBundle> {
    let mut jobs = Vec::new();
    for &priority in &sweep.priorities {
        for &n_pairs in &sweep.n_pairs {
            for &scheme in &sweep.schemes {
                let cell = cfg.cell(scheme, priority, n_pairs)?;
                for trial in 0..cfg.trials {
                    jobs.push((cell.clone(), trial));
                }
            }
        }
    }
    let tail = cfg.settings.report.tail_episodes;
    let crit = cfg.stabilization;
    let work = || -> Vec<RunRecord> {
        jobs.par_iter()
            .map(|(cell, trial)| {
                let seed = run_seed(cfg.base_seed, cell.scheme, cell.priority_class, cell.n_pairs, *trial);
                let started = std::time::Instant::now();
                let outcome = run_single(cell, seed)
                    .map(|log| (summarize(&log, tail, &crit), log))
                    .map_err(|e| e.to_string());
                RunRecord {
                    scheme: cell.scheme,
                    priority: cell.priority_class,
                    n_pairs: cell.n_pairs,
                    trial: *trial,
                    seed,
                    outcome,
                    wall_seconds: started.elapsed().as_secs_f64(),
                }
            })
            .collect()
    };
    let runs = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::Error::Run(e.to_string()))?
        .install(work);
    let cells = aggregate(&runs, sweep);
    let orderings = ordering_checks(&cells, sweep, cfg.settings.report.ordering_margin);
    Ok(ReportBundle {
        settings: cfg.settings.clone(),
        defaulted: cfg.defaulted.clone(),
        sweep: sweep.clone(),
        runs,
        cells,
        orderings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_seeds_are_distinct_per_coordinate() {
        let base = run_seed(7, Scheme::Q1, 3, 5, 0);
        assert_ne!(base, run_seed(7, Scheme::Q2, 3, 5, 0));
        assert_ne!(base, run_seed(7, Scheme::Q1, 2, 5, 0));
        assert_ne!(base, run_seed(7, Scheme::Q1, 3, 4, 0));
        assert_ne!(base, run_seed(7, Scheme::Q1, 3, 5, 1));
        assert_eq!(base ^ 7 ^ 9, run_seed(9, Scheme::Q1, 3, 5, 0));
    }

    #[test]
    fn ordering_requires_margin_on_every_pair() {
        assert!(strictly_ordered(&[1.2, 1.1, 1.0], 0.03));
        assert!(!strictly_ordered(&[1.2, 1.19, 1.0], 0.03));
        assert!(!strictly_ordered(&[1.0, 1.2], 0.0));
        assert!(!strictly_ordered(&[f64::NAN, 1.0], 0.0));
    }
}
