//! CSV, summary, metadata and SVG output of a sweep.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use super::suite::{ReportBundle, RunRecord};
use super::Scheme;
use crate::agents::TrainLog;
use crate::{rng, Error, Result};

pub const TRAINING_LOG_HEADER: &str = "episode,mean_reward,t_nr_us,gamma_nr_mbps,gamma_wf_mbps,jain,u_nr,u_wf";
pub const SWEEP_HEADER: &str =
    "scheme,priority,n_pairs,trial,agg_throughput_mbps,jain,mean_utility,utility_fairness,stabilization_episode";

/// Write one row per episode (episodes numbered from 1).
pub fn write_training_log<W: Write>(out: W, log: &TrainLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAINING_LOG_HEADER.split(','))?;
    for r in &log.episodes {
        w.serialize((
            r.episode + 1,
            r.mean_reward,
            r.t_nr_us,
            r.gamma_nr_mbps,
            r.gamma_wf_mbps,
            r.jain,
            r.u_nr,
            r.u_wf,
        ))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: W, runs: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER.split(','))?;
    for r in runs {
        match r.summary() {
            Some(s) => w.serialize((
                r.scheme.label(),
                r.priority,
                r.n_pairs,
                r.trial,
                s.agg_throughput_mbps,
                s.jain,
                s.mean_utility,
                s.utility_fairness,
                s.stabilization_episode,
            ))?,
            None => w.serialize((r.scheme.label(), r.priority, r.n_pairs, r.trial, "", "", "", "", ""))?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Plain-text summary; the first two lines are the global ordering verdicts.
pub fn summary_text(bundle: &ReportBundle) -> String {
    let verdict = |metric: &str| {
        let checks: Vec<_> = bundle.orderings.iter().filter(|o| o.metric == metric).collect();
        let label = checks.first().map(|o| o.label()).unwrap_or_else(|| match metric {
            "fairness" => "Q1>Q2>Q2u>LBT".into(),
            _ => "LBT>Q2u>Q2>Q1".into(),
        });
        let status = if checks.is_empty() {
            "SKIPPED"
        } else if checks.iter().all(|o| o.pass) {
            "PASS"
        } else {
            "FAIL"
        };
        format!("ordering_{metric}: {label} = {status}")
    };
    let mut s = String::new();
    s.push_str(&verdict("fairness"));
    s.push('\n');
    s.push_str(&verdict("throughput"));
    s.push('\n');
    s.push_str(&format!("margin: {}\n", bundle.settings.report.ordering_margin));
    for o in &bundle.orderings {
        let vals: Vec<String> = o
            .order
            .iter()
            .zip(&o.values)
            .map(|(sch, v)| format!("{sch}={v:.4}"))
            .collect();
        let mab = o.mab_rank.map(|r| format!(" MAB_rank={r}")).unwrap_or_default();
        s.push_str(&format!(
            "cell priority={} n_pairs={} {}: {} [{}]{}\n",
            o.priority,
            o.n_pairs,
            o.metric,
            if o.pass { "PASS" } else { "FAIL" },
            vals.join(" "),
            mab
        ));
    }
    for c in &bundle.cells {
        s.push_str(&format!(
            "mean scheme={} priority={} n_pairs={} trials={} agg_throughput_mbps={:.4} jain={:.4} mean_utility={:.4} utility_fairness={:.4}\n",
            c.scheme, c.priority, c.n_pairs, c.trials_ok, c.agg_throughput_mbps, c.jain, c.mean_utility, c.utility_fairness
        ));
    }
    for &p in &bundle.sweep.priorities {
        for &n in &bundle.sweep.n_pairs {
            let get = |s| bundle.cell(s, p, n);
            if let (Some(q1), Some(q2)) = (get(Scheme::Q1), get(Scheme::Q2)) {
                s.push_str(&format!(
                    "ratio priority={p} n_pairs={n} agg_throughput Q2/Q1 = {:.4}\n",
                    q2.agg_throughput_mbps / q1.agg_throughput_mbps
                ));
            }
            if let (Some(q2), Some(q2u)) = (get(Scheme::Q2), get(Scheme::Q2u)) {
                s.push_str(&format!(
                    "ratio priority={p} n_pairs={n} mean_utility Q2u/Q2 = {:.4}\n",
                    q2u.mean_utility / q2.mean_utility
                ));
            }
        }
    }
    for r in &bundle.runs {
        if let Err(e) = &r.outcome {
            s.push_str(&format!(
                "failed scheme={} priority={} n_pairs={} trial={}: {e}\n",
                r.scheme, r.priority, r.n_pairs, r.trial
            ));
        }
    }
    s
}

#[derive(Serialize)]
struct Metadata<'a> {
    generated_at: String,
    generator_family: &'a str,
    crate_version: &'a str,
    defaulted_fields: &'a [String],
    settings: &'a super::Settings,
    run_seeds: Vec<(String, u8, usize, usize, u64)>,
}

pub fn metadata_json(bundle: &ReportBundle) -> Result<String> {
    let meta = Metadata {
        generated_at: chrono::Utc::now().to_rfc3339(),
        generator_family: rng::GENERATOR_FAMILY,
        crate_version: env!("CARGO_PKG_VERSION"),
        defaulted_fields: &bundle.defaulted,
        settings: &bundle.settings,
        run_seeds: bundle
            .runs
            .iter()
            .map(|r| (r.scheme.label().to_string(), r.priority, r.n_pairs, r.trial, r.seed))
            .collect(),
    };
    serde_json::to_string_pretty(&meta).map_err(|e| Error::Run(e.to_string()))
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Run(format!("plot rendering failed: {e}"))
}

const PALETTE: [RGBColor; 7] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(127, 127, 127),
];

fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    let points = series
        .iter()
        .flat_map(|(_, s)| s.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        return Ok(());
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-6);
    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(
                pts.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()),
                color,
            ))
            .map_err(plot_err)?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Write the report bundle under `dir`:
/// `sweep.csv`, `summary.txt`, `metadata.json`, `logs/*.csv` and `plots/*.svg`.
/// CSV bodies and the summary depend only on the configuration and seeds.
pub fn emit_report(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    let logs = dir.join("logs");
    let plots = dir.join("plots");
    fs::create_dir_all(&logs)?;
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();

    let sweep_path = dir.join("sweep.csv");
    write_sweep_csv(fs::File::create(&sweep_path)?, &bundle.runs)?;
    written.push(sweep_path);

    let summary_path = dir.join("summary.txt");
    fs::write(&summary_path, summary_text(bundle))?;
    written.push(summary_path);

    let meta_path = dir.join("metadata.json");
    fs::write(&meta_path, metadata_json(bundle)?)?;
    written.push(meta_path);

    for r in &bundle.runs {
        if let Ok((_, log)) = &r.outcome {
            let p = logs.join(format!("{}_p{}_n{}_t{}.csv", r.scheme, r.priority, r.n_pairs, r.trial));
            write_training_log(fs::File::create(&p)?, log)?;
            written.push(p);
        }
    }

    for &priority in &bundle.sweep.priorities {
        for &n in &bundle.sweep.n_pairs {
            let series: Vec<(String, Vec<(f64, f64)>)> = bundle
                .sweep
                .schemes
                .iter()
                .filter_map(|&s| {
                    let run = bundle
                        .runs
                        .iter()
                        .find(|r| r.scheme == s && r.priority == priority && r.n_pairs == n && r.trial == 0)?;
                    let (_, log) = run.outcome.as_ref().ok()?;
                    Some((
                        s.to_string(),
                        log.episodes
                            .iter()
                            .map(|e| ((e.episode + 1) as f64, e.mean_reward))
                            .collect(),
                    ))
                })
                .collect();
            let p = plots.join(format!("rewards_p{priority}_n{n}.svg"));
            line_chart(
                &p,
                &format!("Episode reward, priority {priority}, N = {n}"),
                "episode",
                "mean reward",
                &series,
            )?;
            written.push(p);
        }
        if bundle.sweep.n_pairs.len() > 1 {
            let series: Vec<(String, Vec<(f64, f64)>)> = bundle
                .sweep
                .schemes
                .iter()
                .map(|&s| {
                    let pts = bundle
                        .sweep
                        .n_pairs
                        .iter()
                        .filter_map(|&n| bundle.cell(s, priority, n).map(|c| (n as f64, c.agg_throughput_mbps)))
                        .collect();
                    (s.to_string(), pts)
                })
                .collect();
            let p = plots.join(format!("throughput_p{priority}.svg"));
            line_chart(
                &p,
                &format!("Aggregate throughput, priority {priority}"),
                "user pairs N",
                "Mb/s",
                &series,
            )?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Reward trace from a CSV: the `mean_reward` column when the header has
/// one, otherwise the first column (with or without a header).
pub fn read_reward_trace(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = rdr.records();
    let Some(first) = rows.next().transpose()? else {
        return Ok(Vec::new());
    };
    let mut values = Vec::new();
    let column = match first.iter().position(|h| h.trim() == "mean_reward") {
        Some(c) => c,
        None => {
            let v = first.get(0).unwrap_or("").trim();
            if let Ok(x) = v.parse::<f64>() {
                values.push(x);
            }
            0
        }
    };
    for (i, row) in rows.enumerate() {
        let row = row?;
        let field = row.get(column).unwrap_or("").trim();
        let x = field.parse::<f64>().map_err(|_| {
            Error::Parse(format!(
                "{}: row {} has non-numeric reward {field:?}",
                path.display(),
                i + 2
            ))
        })?;
        values.push(x);
    }
    Ok(values)
}
