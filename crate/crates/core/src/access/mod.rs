//! Analytical saturation models of Wi-Fi CSMA/CA and NR-U LBT.
//!
//! Each technology is a two-dimensional (stage, counter) backoff chain. The
//! chains are coupled by the conditional collision probability each node sees,
//! which depends on the transmission probabilities of everyone else; the
//! coupled system is solved by damped fixed-point iteration.

mod chain;
mod coexistence;
mod config;

pub use chain::{solve_chain, stationary_distribution, ChainSolution};
pub use coexistence::{
    analytical_throughput, collision_probabilities, lone_node_throughput, slot_probabilities,
    solve_coexistence_fixed_point, CoexistenceOperatingPoint, FixedPointOptions, SlotProbabilities,
};
pub use config::AccessConfig;
