use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid collision probability {0}: must lie in [0, 1)")]
    InvalidCollisionProbability(f64),

    #[error("solver failure: {reason} (iterations {iterations}, residual {residual:e}, last iterate tau_wf={tau_wf}, tau_nr={tau_nr})")]
    SolverFailure {
        reason: String,
        iterations: usize,
        residual: f64,
        tau_wf: f64,
        tau_nr: f64,
    },

    #[error("fairness undefined: all inputs are zero")]
    UndefinedFairness,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at episode {episode}, step {step}: {detail}")]
    TrainingDiverged {
        episode: usize,
        step: usize,
        detail: String,
    },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("run failure: {0}")]
    Run(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(vec![msg.into()])
    }
}
