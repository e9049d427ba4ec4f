//! Coexistence laboratory for NR-U and Wi-Fi sharing an unlicensed channel.
//!
//! The crate is organised bottom-up:
//!
//! * [`access`] solves the saturated backoff Markov chains of both technologies,
//!   couples them through their collision probabilities and predicts throughput.
//! * [`sim`] is a slotted Monte-Carlo simulator of the same contention process.
//! * [`metrics`] holds Jain fairness and the normalized logarithmic utility.
//! * [`env`] wraps the simulator as a decision process whose action scales the
//!   NR-U TXOP and whose reward is a banded fairness policy.
//! * [`agents`] implements DQN, DDQN, tabular Q-learning, UCB1 and the fixed
//!   LBT baseline behind one training loop.
//! * [`harness`] loads experiment files, runs sweeps and writes reports.
//!
//! The analytical and learning code is generic over [`Scalar`] (`f32`/`f64`);
//! the aliases below fix the `f64` instantiation used by the simulator and CLI.

pub mod access;
pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type AccessConfig = access::AccessConfig<f64>;
pub type ChainSolution = access::ChainSolution<f64>;
pub type CoexistenceOperatingPoint = access::CoexistenceOperatingPoint<f64>;
pub type UtilityModel = metrics::UtilityModel<f64>;
pub type TxopControl = env::TxopControl<f64>;
pub type RewardPolicy = env::RewardPolicy<f64>;
pub type QNetwork = agents::QNetwork<f64>;

pub use agents::{AgentConfig, AgentKind, ReplayBuffer, TrainLog, Transition};
pub use env::{Action, CoexEnv, EnvStep, Environment, StateMode};
pub use harness::{ExperimentConfig, Scheme, StabilizationCriterion};
pub use sim::{EpisodeMetrics, SimConfig};
