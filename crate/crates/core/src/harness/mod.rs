//! Experiment configuration, sweeps, stabilization detection and reports.

mod config;
mod report;
mod stabilization;
mod suite;

pub use config::{
    load_config, load_config_str, ClassSettings, ExperimentConfig, PolicySet, ReportSettings, Scheme, Settings,
    SimSettings, SweepSpec, TxopSettings, UtilitySettings, DEFAULTS_JSON, SCHEMA_VERSION,
};
pub use report::{
    emit_report, metadata_json, read_reward_trace, summary_text, write_sweep_csv, write_training_log, SWEEP_HEADER,
    TRAINING_LOG_HEADER,
};
pub use stabilization::{detect_stabilization, StabilizationCriterion};
pub use suite::{
    run_seed, run_single, run_suite, strictly_ordered, summarize, CellMean, OrderingCheck, ReportBundle, RunRecord,
    RunSummary, Sweep, FAIRNESS_ORDER, THROUGHPUT_ORDER,
};
