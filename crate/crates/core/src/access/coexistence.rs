use serde::Serialize;

use super::{solve_chain, AccessConfig};
use crate::{Error, Result, Scalar};

/// Damped fixed-point iteration controls.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions<T> {
    /// Weight of the new iterate: `tau <- (1 - damping) tau + damping f(tau)`.
    pub damping: T,
    pub tol: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for FixedPointOptions<T> {
    fn default() -> Self {
        Self {
            damping: T::lit(0.5),
            tol: T::lit(1e-10),
            max_iterations: 100_000,
        }
    }
}

impl<T: Scalar> FixedPointOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Joint operating point of the two coupled chains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoexistenceOperatingPoint<T> {
    pub tau_wf: T,
    pub tau_nr: T,
    pub p_w: T,
    pub p_l: T,
    pub gamma_nr: T,
    pub gamma_wf: T,
    pub residual: T,
    pub iterations: usize,
}

/// Conditional collision probabilities (P_w, P_l) seen by a tagged Wi-Fi and
/// NR-U node when every other node transmits independently. A technology with
/// no nodes reports zero.
pub fn collision_probabilities<T: Scalar>(n_wifi: usize, n_nru: usize, tau_wf: T, tau_nr: T) -> (T, T) {
    let idle_wf = |n: usize| (T::one() - tau_wf).powi(n as i32);
    let idle_nr = |n: usize| (T::one() - tau_nr).powi(n as i32);
    let p_w = if n_wifi == 0 {
        T::zero()
    } else {
        T::one() - idle_wf(n_wifi - 1) * idle_nr(n_nru)
    };
    let p_l = if n_nru == 0 {
        T::zero()
    } else {
        T::one() - idle_wf(n_wifi) * idle_nr(n_nru - 1)
    };
    (p_w, p_l)
}

/// Map (tau_wf, tau_nr) through the collision coupling and both chains.
fn chain_map<T: Scalar>(
    n_wifi: usize,
    n_nru: usize,
    wifi: &AccessConfig<T>,
    nru: &AccessConfig<T>,
    tau_wf: T,
    tau_nr: T,
) -> Result<(T, T)> {
    let (p_w, p_l) = collision_probabilities(n_wifi, n_nru, tau_wf, tau_nr);
    let next_wf = if n_wifi == 0 {
        T::zero()
    } else {
        solve_chain(wifi, p_w)?.tau
    };
    let next_nr = if n_nru == 0 {
        T::zero()
    } else {
        solve_chain(nru, p_l)?.tau
    };
    Ok((next_wf, next_nr))
}

/// Solve the coupled chains for `n_wifi` Wi-Fi and `n_nru` NR-U nodes.
///
/// The iteration starts from the collision-free transmission probabilities and
/// stops when the larger of the two fixed-point defects is within `opts.tol`.
pub fn solve_coexistence_fixed_point<T: Scalar>(
    n_wifi: usize,
    n_nru: usize,
    wifi: &AccessConfig<T>,
    nru: &AccessConfig<T>,
    opts: &FixedPointOptions<T>,
) -> Result<CoexistenceOperatingPoint<T>> {
    if n_wifi + n_nru == 0 {
        return Err(Error::Domain("fixed point needs at least one node".into()));
    }
    if !(opts.tol > T::zero()) || !(opts.damping > T::zero() && opts.damping <= T::one()) {
        return Err(Error::Domain(format!(
            "invalid fixed-point options: tol {}, damping {}",
            opts.tol, opts.damping
        )));
    }
    let fresh = |c: &AccessConfig<T>, n: usize| {
        if n == 0 {
            T::zero()
        } else {
            T::lit(2.0) / (T::from_count(c.initial_window as usize) + T::one())
        }
    };
    let (mut tau_wf, mut tau_nr) = (fresh(wifi, n_wifi), fresh(nru, n_nru));
    let mut residual = T::infinity();
    for iteration in 0..opts.max_iterations {
        let (next_wf, next_nr) = chain_map(n_wifi, n_nru, wifi, nru, tau_wf, tau_nr)?;
        residual = (next_wf - tau_wf).abs().max((next_nr - tau_nr).abs());
        if residual <= opts.tol {
            let (p_w, p_l) = collision_probabilities(n_wifi, n_nru, tau_wf, tau_nr);
            let mut point = CoexistenceOperatingPoint {
                tau_wf,
                tau_nr,
                p_w,
                p_l,
                gamma_nr: T::zero(),
                gamma_wf: T::zero(),
                residual,
                iterations: iteration,
            };
            let (gamma_nr, gamma_wf) = analytical_throughput(&point, n_wifi, n_nru, wifi, nru);
            point.gamma_nr = gamma_nr;
            point.gamma_wf = gamma_wf;
            return Ok(point);
        }
        let d = opts.damping;
        tau_wf = (T::one() - d) * tau_wf + d * next_wf;
        tau_nr = (T::one() - d) * tau_nr + d * next_nr;
    }
    Err(Error::SolverFailure {
        reason: "fixed-point iteration cap reached".into(),
        iterations: opts.max_iterations,
        residual: residual.as_f64(),
        tau_wf: tau_wf.as_f64(),
        tau_nr: tau_nr.as_f64(),
    })
}

/// Per-slot event probabilities of the shared channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotProbabilities<T> {
    pub idle: T,
    pub wifi_success: T,
    pub nru_success: T,
    /// Collisions among Wi-Fi nodes only.
    pub wifi_collision: T,
    /// Collisions among NR-U nodes only.
    pub nru_collision: T,
    /// Collisions with at least one node of each technology.
    pub mixed_collision: T,
}

pub fn slot_probabilities<T: Scalar>(n_wifi: usize, n_nru: usize, tau_wf: T, tau_nr: T) -> SlotProbabilities<T> {
    let one = T::one();
    let none_wf = (one - tau_wf).powi(n_wifi as i32);
    let none_nr = (one - tau_nr).powi(n_nru as i32);
    let single_wf = if n_wifi == 0 {
        T::zero()
    } else {
        T::from_count(n_wifi) * tau_wf * (one - tau_wf).powi(n_wifi as i32 - 1)
    };
    let single_nr = if n_nru == 0 {
        T::zero()
    } else {
        T::from_count(n_nru) * tau_nr * (one - tau_nr).powi(n_nru as i32 - 1)
    };
    SlotProbabilities {
        idle: none_wf * none_nr,
        wifi_success: single_wf * none_nr,
        nru_success: single_nr * none_wf,
        wifi_collision: (one - none_wf - single_wf).max(T::zero()) * none_nr,
        nru_collision: (one - none_nr - single_nr).max(T::zero()) * none_wf,
        mixed_collision: (one - none_wf) * (one - none_nr),
    }
}

/// Saturation throughput (Mb/s) of NR-U and Wi-Fi at an operating point.
///
/// Each slot is idle, a success of one technology, or a collision; idle slots
/// last `slot_us`, occupancy events last defer + TXOP, and a collision lasts as
/// long as its longest participant.
pub fn analytical_throughput<T: Scalar>(
    point: &CoexistenceOperatingPoint<T>,
    n_wifi: usize,
    n_nru: usize,
    wifi: &AccessConfig<T>,
    nru: &AccessConfig<T>,
) -> (T, T) {
    if n_wifi + n_nru == 0 {
        return (T::zero(), T::zero());
    }
    let pr = slot_probabilities(n_wifi, n_nru, point.tau_wf, point.tau_nr);
    let slot = if n_wifi > 0 { wifi.slot_us } else { nru.slot_us };
    let occ_wf = wifi.occupancy_us();
    let occ_nr = nru.occupancy_us();
    let mean_slot = pr.idle * slot
        + (pr.wifi_success + pr.wifi_collision) * occ_wf
        + (pr.nru_success + pr.nru_collision) * occ_nr
        + pr.mixed_collision * occ_wf.max(occ_nr);
    let gamma_nr = pr.nru_success * nru.payload_bits() / mean_slot;
    let gamma_wf = pr.wifi_success * wifi.payload_bits() / mean_slot;
    (gamma_nr, gamma_wf)
}

/// Throughput of a single saturated node that never collides.
pub fn lone_node_throughput<T: Scalar>(cfg: &AccessConfig<T>) -> T {
    let tau = T::lit(2.0) / (T::from_count(cfg.initial_window as usize) + T::one());
    tau * cfg.payload_bits() / (tau * cfg.occupancy_us() + (T::one() - tau) * cfg.slot_us)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(w0: u32, m: u32, cap: u32, txop: f64, defer: f64, rate: f64) -> AccessConfig<f64> {
        AccessConfig {
            initial_window: w0,
            max_stage: m,
            window_cap: cap,
            txop_us: txop,
            defer_us: defer,
            slot_us: 9.0,
            rate_mbps: rate,
        }
    }

    fn wifi() -> AccessConfig<f64> {
        cfg(32, 5, 1024, 2528.0, 34.0, 65.0)
    }

    fn nru() -> AccessConfig<f64> {
        cfg(16, 5, 512, 8000.0, 25.0, 75.0)
    }

    #[test]
    fn lone_wifi_node_never_collides() {
        let op = solve_coexistence_fixed_point(1, 0, &wifi(), &nru(), &FixedPointOptions::default()).unwrap();
        assert_eq!(op.p_w, 0.0);
        assert_relative_eq!(op.tau_wf, 2.0 / 33.0, max_relative = 1e-12);
        assert_eq!(op.tau_nr, 0.0);
        assert_eq!(op.gamma_nr, 0.0);
    }

    #[test]
    fn lone_nru_node_never_collides() {
        let op = solve_coexistence_fixed_point(0, 1, &wifi(), &nru(), &FixedPointOptions::default()).unwrap();
        assert_eq!(op.p_l, 0.0);
        assert_relative_eq!(op.tau_nr, 2.0 / 17.0, max_relative = 1e-12);
    }

    #[test]
    fn single_node_renewal_formula() {
        let w = wifi();
        let op = solve_coexistence_fixed_point(1, 0, &w, &nru(), &FixedPointOptions::default()).unwrap();
        let tau = op.tau_wf;
        let expected = tau * w.payload_bits() / (tau * w.occupancy_us() + (1.0 - tau) * w.slot_us);
        assert_relative_eq!(op.gamma_wf, expected, max_relative = 1e-14);
        assert_relative_eq!(lone_node_throughput(&w), expected, max_relative = 1e-12);
    }

    #[test]
    fn empty_network_has_no_throughput() {
        let point = CoexistenceOperatingPoint {
            tau_wf: 0.1,
            tau_nr: 0.1,
            p_w: 0.0,
            p_l: 0.0,
            gamma_nr: 0.0,
            gamma_wf: 0.0,
            residual: 0.0,
            iterations: 0,
        };
        assert_eq!(analytical_throughput(&point, 0, 0, &wifi(), &nru()), (0.0, 0.0));
        assert!(solve_coexistence_fixed_point(0, 0, &wifi(), &nru(), &FixedPointOptions::default()).is_err());
    }

    #[test]
    fn converged_point_reproduces_itself() {
        let (w, n) = (wifi(), nru());
        let opts = FixedPointOptions::default();
        let op = solve_coexistence_fixed_point(3, 4, &w, &n, &opts).unwrap();
        assert!(op.residual <= opts.tol);
        let (p_w, p_l) = collision_probabilities(3, 4, op.tau_wf, op.tau_nr);
        assert!((solve_chain(&w, p_w).unwrap().tau - op.tau_wf).abs() <= 1e-10);
        assert!((solve_chain(&n, p_l).unwrap().tau - op.tau_nr).abs() <= 1e-10);
    }

    #[test]
    fn slot_probabilities_sum_to_one() {
        for (nw, nn) in [(0, 3), (2, 0), (1, 1), (5, 5), (10, 2)] {
            let p = slot_probabilities(nw, nn, 0.07, 0.11);
            let total =
                p.idle + p.wifi_success + p.nru_success + p.wifi_collision + p.nru_collision + p.mixed_collision;
            assert_relative_eq!(total, 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        let opts = FixedPointOptions {
            max_iterations: 2,
            ..FixedPointOptions::default()
        };
        match solve_coexistence_fixed_point(5, 5, &wifi(), &nru(), &opts) {
            Err(Error::SolverFailure {
                iterations,
                residual,
                tau_wf,
                ..
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0 && tau_wf > 0.0);
            }
            other => panic!("expected solver failure, got {other:?}"),
        }
    }
}
