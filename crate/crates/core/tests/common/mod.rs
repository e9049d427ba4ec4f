//! Independent reference implementations used as test oracles, plus a stub
//! environment whose optimal policy is known.

#![allow(dead_code)]

use coexlab::agents::QNetwork;
use coexlab::env::{Action, EnvStep, Environment};
use coexlab::sim::EpisodeMetrics;
use coexlab::AccessConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stationary tau of the explicit backoff chain by power iteration.
///
/// States are (stage j, counter k) with `k < W_j`. A nonzero counter steps
/// down deterministically; at zero the node transmits, and goes to a uniform
/// counter of stage 0 with probability `1 - p` or of stage `min(j + 1, m)`
/// with probability `p`. Every state of a stage therefore receives the same
/// redistributed mass, so one sweep of `pi <- pi P` is a shift plus a
/// per-stage constant. Iterates from the uniform vector until the L1 change
/// per sweep drops below `1e-13` (or a hard cap), then sums the k = 0 mass.
/// The chain contracts at roughly `1 - 1/W_max` per sweep, so the remaining
/// error in tau stays near `1e-10`.
pub fn power_iteration_tau(cfg: &AccessConfig, p: f64) -> f64 {
    let w: Vec<usize> = (0..=cfg.max_stage)
        .map(|j| ((cfg.initial_window as u64) << j).min(cfg.window_cap as u64) as usize)
        .collect();
    let offsets: Vec<usize> = w
        .iter()
        .scan(0, |acc, &x| {
            let o = *acc;
            *acc += x;
            Some(o)
        })
        .collect();
    let n: usize = w.iter().sum();
    let m = w.len() - 1;
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut inflow = vec![0.0; m + 1];
    let cap = 400 * w[m] + 10_000;
    for it in 0..cap {
        // Mass redistributed into each state of stage j.
        inflow.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..=m {
            let head = pi[offsets[j]];
            inflow[0] += (1.0 - p) * head;
            inflow[(j + 1).min(m)] += p * head;
        }
        let mut diff = 0.0;
        for j in 0..=m {
            let c = inflow[j] / w[j] as f64;
            let (b, len) = (offsets[j], w[j]);
            let src = &pi[b..b + len];
            let dst = &mut next[b..b + len];
            for k in 0..len - 1 {
                dst[k] = src[k + 1] + c;
                diff += (dst[k] - src[k]).abs();
            }
            dst[len - 1] = c;
            diff += (c - src[len - 1]).abs();
        }
        std::mem::swap(&mut pi, &mut next);
        if diff < 1e-13 && it > 2 * w[m] {
            break;
        }
    }
    offsets.iter().map(|&o| pi[o]).sum()
}

/// Bisection on `f(x) = 0` over `[lo, hi]` with `f(lo) < 0 < f(hi)`.
pub fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Straightforward forward pass written independently of the library.
pub fn naive_forward(net: &QNetwork<f64>, s: f64) -> Vec<f64> {
    let mut x = vec![s - net.input_offset];
    for (li, layer) in net.layers.iter().enumerate() {
        let mut y = Vec::new();
        for o in 0..layer.n_out {
            let mut z = layer.biases[o];
            for i in 0..layer.n_in {
                z += layer.weights[o * layer.n_in + i] * x[i];
            }
            if li + 1 < net.layers.len() && z < 0.0 {
                z = 0.0;
            }
            y.push(z);
        }
        x = y;
    }
    x
}

/// Reference stabilization scan: recompute every window mean from scratch.
pub fn reference_stabilization(r: &[f64], w: usize, tol: f64, hold: usize) -> Option<usize> {
    let mu = |t: usize| r[t - w..t].iter().sum::<f64>() / w as f64; // episodes t-w+1..=t, 1-based
    let mut t_start = w;
    while t_start + hold - 1 <= r.len() {
        let base = mu(t_start);
        if base != 0.0 && (t_start..t_start + hold).all(|t| (mu(t) - base).abs() <= tol * base.abs()) {
            return Some(t_start + hold - 1);
        }
        t_start += 1;
    }
    None
}

/// Environment where `Decrease` earns 2 and anything else earns -1,
/// independent of the state; states are drawn uniformly from `[0.5, 10]`.
pub struct DecreaseStub {
    rng: ChaCha8Rng,
    seed: u64,
    state: f64,
    t_nr: f64,
}

impl DecreaseStub {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            state: 1.0,
            t_nr: 8000.0,
        }
    }
}

impl Environment for DecreaseStub {
    fn reset(&mut self, episode: usize) -> coexlab::Result<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed ^ (episode as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.state = self.rng.gen_range(0.5..10.0);
        self.t_nr = 8000.0;
        Ok(self.state)
    }

    fn step(&mut self, a: Action) -> coexlab::Result<EnvStep> {
        let next = self.rng.gen_range(0.5..10.0);
        let reward = if a == Action::Decrease { 2.0 } else { -1.0 };
        let out = EnvStep {
            state: self.state,
            action: a,
            reward,
            next_state: next,
            metrics: EpisodeMetrics::default(),
            t_nr: self.t_nr,
            jain: 1.0,
            u_nr: 0.5,
            u_wf: 0.5,
        };
        self.state = next;
        Ok(out)
    }

    fn txop(&self) -> f64 {
        self.t_nr
    }
}

/// Access parameters of the reference profile (both technologies share the
/// chain; NR-U defers less and sends at a higher rate).
pub fn table_profile() -> (AccessConfig, AccessConfig) {
    let wifi = AccessConfig {
        initial_window: 16,
        max_stage: 6,
        window_cap: 1024,
        txop_us: 2528.0,
        defer_us: 34.0,
        slot_us: 9.0,
        rate_mbps: 65.0,
    };
    let nru = AccessConfig {
        txop_us: 8000.0,
        defer_us: 25.0,
        rate_mbps: 75.0,
        ..wifi
    };
    (wifi, nru)
}

/// Built-in experiment resolved at one grid cell.
pub fn default_cell(scheme: coexlab::Scheme, priority: u8, n_pairs: usize) -> coexlab::ExperimentConfig {
    coexlab::ExperimentConfig::from_settings(coexlab::harness::Settings::defaults())
        .and_then(|c| c.cell(scheme, priority, n_pairs))
        .expect("built-in defaults are valid")
}

/// Smallest |pre-activation| over the hidden units at input `s`. Central
/// differences are only valid where no unit sits on its ReLU kink.
pub fn kink_margin(net: &QNetwork<f64>, s: f64) -> f64 {
    let mut x = vec![s - net.input_offset];
    let mut margin = f64::INFINITY;
    for layer in &net.layers[..net.layers.len() - 1] {
        let z: Vec<f64> = (0..layer.n_out)
            .map(|o| {
                layer.biases[o]
                    + (0..layer.n_in)
                        .map(|i| layer.weights[o * layer.n_in + i] * x[i])
                        .sum::<f64>()
            })
            .collect();
        margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        x = z.into_iter().map(|v| v.max(0.0)).collect();
    }
    margin
}

/// Random inputs at least `1e-3` away from every kink of `net`.
pub fn smooth_batch<R: Rng>(
    net: &QNetwork<f64>,
    n: usize,
    target_scale: f64,
    rng: &mut R,
) -> (Vec<(f64, Action)>, Vec<f64>) {
    let mut batch = Vec::with_capacity(n);
    while batch.len() < n {
        let s = rng.gen_range(0.1..10.0);
        if kink_margin(net, s) > 1e-3 {
            batch.push((s, Action::ALL[rng.gen_range(0..3)]));
        }
    }
    let targets = (0..n).map(|_| rng.gen_range(-target_scale..target_scale)).collect();
    (batch, targets)
}
