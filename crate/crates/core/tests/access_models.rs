mod common;

use approx::assert_relative_eq;
use coexlab::access::{
    analytical_throughput, collision_probabilities, solve_chain, solve_coexistence_fixed_point, FixedPointOptions,
};
use coexlab::AccessConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{bisect, power_iteration_tau, table_profile};

// Frozen from an exact rational evaluation and an independent power iteration.
const TAU_16_3_64_P03: f64 = 50.0 / 617.0;
// Frozen from bisection on the symmetric defect of the 2+2 reference network.
const SYM_TAU: f64 = 0.083_961_413_395_365_64;
const SYM_P: f64 = 0.23132757094195955;
// Frozen slot-decomposition throughputs at the same point with T_NR = 8000 µs.
const REF_GAMMA_NR: f64 = 47.13162892345077;
const REF_GAMMA_WF: f64 = 12.907782107835715;

fn chain(w0: u32, m: u32, cap: u32) -> AccessConfig {
    AccessConfig {
        initial_window: w0,
        max_stage: m,
        window_cap: cap,
        ..table_profile().0
    }
}

#[test]
fn tau_matches_frozen_value() {
    let sol = solve_chain(&chain(16, 3, 64), 0.3).unwrap();
    assert_relative_eq!(sol.tau, TAU_16_3_64_P03, max_relative = 1e-12);
    assert_relative_eq!(sol.stationary_heads.iter().sum::<f64>(), sol.tau, max_relative = 1e-12);
}

#[test]
fn tau_matches_power_iteration_on_small_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..12 {
        let w0 = rng.gen_range(2..=32);
        let m = rng.gen_range(0..=4);
        let cap = rng.gen_range(w0..=w0 << m);
        let cfg = chain(w0, m, cap);
        for p in [0.0, 0.25, 0.5, 0.8] {
            let want = power_iteration_tau(&cfg, p);
            let got = solve_chain(&cfg, p).unwrap().tau;
            assert!(
                (got - want).abs() < 1e-8,
                "W0={w0} m={m} cap={cap} p={p}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn zero_collision_collapses_to_stage_zero() {
    for w0 in [2u32, 16, 32, 1000] {
        let tau = solve_chain(&chain(w0, 5, 4096.max(w0)), 0.0).unwrap().tau;
        assert!((tau - 2.0 / (w0 as f64 + 1.0)).abs() < 1e-12);
    }
}

#[test]
fn tau_decreases_with_collision_probability() {
    let cfg = chain(16, 6, 1024);
    let taus: Vec<f64> = (0..10)
        .map(|i| solve_chain(&cfg, i as f64 / 10.0).unwrap().tau)
        .collect();
    assert!(taus.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn symmetric_fixed_point_matches_bisection() {
    let (wifi, nru) = table_profile();
    // Both technologies share one chain, so the fixed point is symmetric:
    // tau = tau_chain(1 - (1 - tau)^3).
    let defect = |tau: f64| tau - solve_chain(&wifi, 1.0 - (1.0 - tau).powi(3)).unwrap().tau;
    let tau_bis = bisect(1e-6, 0.5, defect);
    assert_relative_eq!(tau_bis, SYM_TAU, max_relative = 1e-10);

    let op = solve_coexistence_fixed_point(2, 2, &wifi, &nru, &FixedPointOptions::default()).unwrap();
    assert_relative_eq!(op.tau_wf, SYM_TAU, max_relative = 1e-8);
    assert_relative_eq!(op.tau_nr, SYM_TAU, max_relative = 1e-8);
    assert_relative_eq!(op.p_w, SYM_P, max_relative = 1e-8);
    assert_relative_eq!(op.p_l, SYM_P, max_relative = 1e-8);
    assert!(op.residual <= 1e-10);
}

#[test]
fn operating_point_is_self_consistent() {
    let (wifi, nru) = table_profile();
    for (nw, nn) in [(1, 3), (3, 1), (5, 5), (10, 2), (0, 4), (4, 0)] {
        let op = solve_coexistence_fixed_point(nw, nn, &wifi, &nru, &FixedPointOptions::default()).unwrap();
        let (pw, pl) = collision_probabilities(nw, nn, op.tau_wf, op.tau_nr);
        assert!((pw - op.p_w).abs() < 1e-9, "({nw},{nn})");
        assert!((pl - op.p_l).abs() < 1e-9, "({nw},{nn})");
        if nw > 0 {
            assert!((solve_chain(&wifi, op.p_w).unwrap().tau - op.tau_wf).abs() < 1e-9);
        }
        if nn > 0 {
            assert!((solve_chain(&nru, op.p_l).unwrap().tau - op.tau_nr).abs() < 1e-9);
        }
        for v in [op.tau_wf, op.tau_nr, op.p_w, op.p_l] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn reference_throughputs_are_frozen() {
    let (wifi, nru) = table_profile();
    let op = solve_coexistence_fixed_point(2, 2, &wifi, &nru, &FixedPointOptions::default()).unwrap();
    let (g_nr, g_wf) = analytical_throughput(&op, 2, 2, &wifi, &nru);
    assert_relative_eq!(g_nr, REF_GAMMA_NR, max_relative = 1e-8);
    assert_relative_eq!(g_wf, REF_GAMMA_WF, max_relative = 1e-8);
}

#[test]
fn longer_txop_shifts_share_to_nru() {
    let (wifi, nru) = table_profile();
    let op = solve_coexistence_fixed_point(3, 3, &wifi, &nru, &FixedPointOptions::default()).unwrap();
    let mut last = 0.0;
    for t in [500.0, 1000.0, 2000.0, 4000.0, 8000.0] {
        let (g_nr, g_wf) = analytical_throughput(&op, 3, 3, &wifi, &nru.with_txop(t));
        let ratio = g_nr / g_wf;
        assert!(ratio > last);
        last = ratio;
    }
}

#[test]
fn invalid_collision_probability_is_rejected() {
    assert!(solve_chain(&chain(16, 3, 64), 1.0).is_err());
    assert!(solve_chain(&chain(16, 3, 64), -0.1).is_err());
}
