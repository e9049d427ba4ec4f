use serde::Serialize;

use super::AccessConfig;
use crate::{Error, Result, Scalar};

/// Stationary solution of one technology's backoff chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSolution<T> {
    /// Per-slot transmission probability, the sum of `stationary_heads`.
    pub tau: T,
    /// Stationary probability of state (j, 0) for every stage j.
    pub stationary_heads: Vec<T>,
    /// Conditional collision probability the chain was solved for.
    pub collision_prob_in: T,
}

fn check_probability<T: Scalar>(p: T) -> Result<()> {
    if p.is_finite() && p >= T::zero() && p < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidCollisionProbability(p.as_f64()))
    }
}

/// Relative weights of the stage heads b_{j,0}.
///
/// A stage is entered only through a collision at the previous stage, so
/// b_{j,0} = p^j b_{0,0} below the last stage; the last stage also absorbs its
/// own collisions, which adds the geometric factor 1/(1-p).
fn head_weights<T: Scalar>(max_stage: u32, p: T) -> Vec<T> {
    let mut weights = Vec::with_capacity(max_stage as usize + 1);
    let mut pj = T::one();
    for _ in 0..max_stage {
        weights.push(pj);
        pj *= p;
    }
    weights.push(pj / (T::one() - p));
    weights
}

/// Solve the saturated backoff chain for collision probability `p`.
///
/// Counters at stage j are drawn uniformly from `0..W_j` with
/// `W_j = min(2^j W0, CW_max)`; a collision at the last stage re-enters it.
pub fn solve_chain<T: Scalar>(cfg: &AccessConfig<T>, p: T) -> Result<ChainSolution<T>> {
    check_probability(p)?;
    let weights = head_weights(cfg.max_stage, p);
    let two = T::lit(2.0);
    // Each stage j holds b_{j,0} (W_j + 1) / 2 of the total mass.
    let mass: T = weights
        .iter()
        .zip(cfg.windows())
        .map(|(&w, win)| w * (T::from_count(win as usize) + T::one()) / two)
        .sum();
    if !(mass.is_finite() && mass > T::zero()) {
        return Err(Error::SolverFailure {
            reason: format!("chain not normalizable: total mass {mass} for p = {p}"),
            iterations: 0,
            residual: f64::NAN,
            tau_wf: f64::NAN,
            tau_nr: f64::NAN,
        });
    }
    let stationary_heads: Vec<T> = weights.iter().map(|&w| w / mass).collect();
    let tau = stationary_heads.iter().copied().sum();
    Ok(ChainSolution {
        tau,
        stationary_heads,
        collision_prob_in: p,
    })
}

/// Full stationary distribution b_{j,k}, indexed `[stage][counter]`.
pub fn stationary_distribution<T: Scalar>(cfg: &AccessConfig<T>, p: T) -> Result<Vec<Vec<T>>> {
    let sol = solve_chain(cfg, p)?;
    Ok(cfg
        .windows()
        .into_iter()
        .zip(&sol.stationary_heads)
        .map(|(w, &head)| {
            let wf = T::from_count(w as usize);
            (0..w).map(|k| head * (wf - T::from_count(k as usize)) / wf).collect()
        })
        .collect())
}
