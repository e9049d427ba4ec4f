//! The coexistence process as a decision problem.
//!
//! The state is a scalar ratio between the two systems (throughput or
//! utility), the action scales the NR-U TXOP, and the reward is a banded
//! function of the distance of the state from one.

use serde::{Deserialize, Serialize};

use crate::metrics::{clamp_utility, jain_index, UtilityModel};
use crate::sim::{run_window, EpisodeMetrics, SimConfig};
use crate::{rng, Error, Result, Scalar};

/// Throughput floor applied before forming ratios, Mb/s.
pub const GAMMA_FLOOR: f64 = 1e-6;
/// States are clipped to `[1 / S_CAP, S_CAP]`.
pub const S_CAP: f64 = 10.0;
/// Utilities are clamped to `[UTILITY_FLOOR, 1]`.
pub const UTILITY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Increase = 0,
    Decrease = 1,
    Unchanged = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Increase, Action::Decrease, Action::Unchanged];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// NR-U TXOP under multiplicative control, kept inside `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxopControl<T> {
    pub t_nr: T,
    pub alpha: T,
    pub beta: T,
    pub t_min: T,
    pub t_max: T,
    pub priority_class: u8,
}

impl<T: Scalar> TxopControl<T> {
    pub fn new(t_nr: T, alpha: T, beta: T, t_min: T, t_max: T, priority_class: u8) -> Result<Self> {
        let ctrl = Self {
            t_nr,
            alpha,
            beta,
            t_min,
            t_max,
            priority_class,
        };
        let v = ctrl.violations();
        if v.is_empty() {
            Ok(ctrl)
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.alpha > T::one() && self.alpha.is_finite()) {
            v.push(format!("txop.alpha must be > 1 (got {})", self.alpha));
        }
        if !(self.beta > T::zero() && self.beta < T::one()) {
            v.push(format!("txop.beta must lie in (0, 1) (got {})", self.beta));
        }
        if !(self.t_min > T::zero() && self.t_min <= self.t_max && self.t_max.is_finite()) {
            v.push(format!(
                "txop bounds need 0 < t_min <= t_max (got {}, {})",
                self.t_min, self.t_max
            ));
        } else if !(self.t_nr >= self.t_min && self.t_nr <= self.t_max) {
            v.push(format!(
                "txop.t_nr ({}) must lie in [{}, {}]",
                self.t_nr, self.t_min, self.t_max
            ));
        }
        if !(1..=4).contains(&self.priority_class) {
            v.push(format!("priority_class must be 1..4 (got {})", self.priority_class));
        }
        v
    }

    fn clamp(&self, t: T) -> T {
        t.max(self.t_min).min(self.t_max)
    }
}

/// Scale the TXOP by `alpha`, `beta` or one, then clamp to the class bounds.
pub fn apply_action<T: Scalar>(ctrl: &TxopControl<T>, a: Action) -> TxopControl<T> {
    let raw = match a {
        Action::Increase => ctrl.t_nr * ctrl.alpha,
        Action::Decrease => ctrl.t_nr * ctrl.beta,
        Action::Unchanged => ctrl.t_nr,
    };
    TxopControl {
        t_nr: ctrl.clamp(raw),
        ..*ctrl
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyName {
    Q1,
    Q2,
    Q2u,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMode {
    ThroughputRatio,
    UtilityRatio,
}

/// Banded reward: `r3` inside `d2` of a balanced state, `r2` up to `d1`,
/// `r1` beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardPolicy<T> {
    pub name: PolicyName,
    pub d1: T,
    pub d2: T,
    pub r1: T,
    pub r2: T,
    pub r3: T,
    pub state_mode: StateMode,
}

impl<T: Scalar> RewardPolicy<T> {
    /// Absolute fairness.
    pub fn q1() -> Self {
        Self::banded(PolicyName::Q1, 0.2, 0.1, StateMode::ThroughputRatio)
    }

    /// Moderate fairness.
    pub fn q2() -> Self {
        Self::banded(PolicyName::Q2, 0.5, 0.3, StateMode::ThroughputRatio)
    }

    /// Moderate fairness on the utility ratio.
    pub fn q2u() -> Self {
        Self::banded(PolicyName::Q2u, 0.5, 0.3, StateMode::UtilityRatio)
    }

    fn banded(name: PolicyName, d1: f64, d2: f64, state_mode: StateMode) -> Self {
        Self {
            name,
            d1: T::lit(d1),
            d2: T::lit(d2),
            r1: T::lit(-1.0),
            r2: T::lit(0.5),
            r3: T::lit(2.0),
            state_mode,
        }
    }

    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.d2 > T::zero() && self.d2 < self.d1 && self.d1 < T::one()) {
            v.push(format!(
                "{prefix}: bands need 0 < d2 < d1 < 1 (got d1={}, d2={})",
                self.d1, self.d2
            ));
        }
        if !(self.r1 < self.r2 && self.r2 < self.r3) {
            v.push(format!(
                "{prefix}: rewards need r1 < r2 < r3 (got {}, {}, {})",
                self.r1, self.r2, self.r3
            ));
        }
        let expected = match self.name {
            PolicyName::Q1 | PolicyName::Q2 => StateMode::ThroughputRatio,
            PolicyName::Q2u => StateMode::UtilityRatio,
        };
        if self.state_mode != expected {
            v.push(format!("{prefix}: {:?} must use state mode {:?}", self.name, expected));
        }
        v
    }
}

/// Band edges are inclusive. Forming `s - 1` costs a rounding step (1.1 - 1
/// is not 0.1 in binary), so edges get a few ulps of slack.
pub fn compute_reward<T: Scalar>(s: T, policy: &RewardPolicy<T>) -> T {
    let dev = (s - T::one()).abs();
    let slack = T::epsilon() * T::lit(8.0) * s.abs().max(T::one());
    if dev <= policy.d2 + slack {
        policy.r3
    } else if dev <= policy.d1 + slack {
        policy.r2
    } else {
        policy.r1
    }
}

fn clip_state(s: f64) -> f64 {
    if s.is_nan() {
        1.0
    } else {
        s.clamp(1.0 / S_CAP, S_CAP)
    }
}

/// Clamped utilities `(U_NR, U_WF)` of one window's throughputs.
pub fn clamped_utilities(metrics: &EpisodeMetrics, umodel: &UtilityModel<f64>) -> Result<(f64, f64)> {
    let u = |g: f64| -> Result<f64> { Ok(clamp_utility(umodel.utility(g.max(GAMMA_FLOOR))?, UTILITY_FLOOR)) };
    Ok((u(metrics.gamma_nr)?, u(metrics.gamma_wf)?))
}

/// State of one completed window. The throughput mode never consults
/// `umodel`; the utility mode never forms a throughput ratio.
pub fn observe_state(metrics: &EpisodeMetrics, policy: &RewardPolicy<f64>, umodel: &UtilityModel<f64>) -> Result<f64> {
    match policy.state_mode {
        StateMode::ThroughputRatio => Ok(clip_state(
            metrics.gamma_nr.max(GAMMA_FLOOR) / metrics.gamma_wf.max(GAMMA_FLOOR),
        )),
        StateMode::UtilityRatio => {
            let (u_nr, u_wf) = clamped_utilities(metrics, umodel)?;
            Ok(clip_state(u_nr / u_wf))
        }
    }
}

/// One decision step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvStep {
    pub state: f64,
    pub action: Action,
    pub reward: f64,
    pub next_state: f64,
    pub metrics: EpisodeMetrics,
    /// TXOP in force during the window, µs.
    pub t_nr: f64,
    pub jain: f64,
    pub u_nr: f64,
    pub u_wf: f64,
}

/// Apply `a`, simulate one window with the resulting TXOP under `seed`, and
/// score the post-action state.
pub fn env_step(
    sim_cfg: &SimConfig,
    ctrl: &TxopControl<f64>,
    state: f64,
    a: Action,
    policy: &RewardPolicy<f64>,
    umodel: &UtilityModel<f64>,
    seed: u64,
) -> Result<(EnvStep, TxopControl<f64>)> {
    let next_ctrl = apply_action(ctrl, a);
    let metrics = run_window(&crate::sim::reseed(sim_cfg, seed), next_ctrl.t_nr);
    let next_state = observe_state(&metrics, policy, umodel)?;
    let (u_nr, u_wf) = clamped_utilities(&metrics, umodel)?;
    let jain = match jain_index(metrics.gamma_nr, metrics.gamma_wf) {
        Ok(j) => j,
        Err(Error::UndefinedFairness) => f64::NAN,
        Err(e) => return Err(e),
    };
    let step = EnvStep {
        state,
        action: a,
        reward: compute_reward(next_state, policy),
        next_state,
        metrics,
        t_nr: next_ctrl.t_nr,
        jain,
        u_nr,
        u_wf,
    };
    Ok((step, next_ctrl))
}

/// What an agent sees of its environment.
pub trait Environment {
    /// Start episode `episode` and return its initial state.
    fn reset(&mut self, episode: usize) -> Result<f64>;
    fn step(&mut self, a: Action) -> Result<EnvStep>;
    /// Current NR-U TXOP, µs.
    fn txop(&self) -> f64;
}

/// Simulator-backed environment. Each episode restarts from the initial
/// TXOP; every window uses a seed derived from `(base_seed, episode, step)`.
#[derive(Debug, Clone)]
pub struct CoexEnv {
    sim: SimConfig,
    initial: TxopControl<f64>,
    ctrl: TxopControl<f64>,
    policy: RewardPolicy<f64>,
    umodel: UtilityModel<f64>,
    base_seed: u64,
    episode: usize,
    step: usize,
    state: f64,
}

impl CoexEnv {
    pub fn new(
        sim: SimConfig,
        ctrl: TxopControl<f64>,
        policy: RewardPolicy<f64>,
        umodel: UtilityModel<f64>,
        base_seed: u64,
    ) -> Result<Self> {
        let mut v = sim.violations();
        v.extend(ctrl.violations());
        v.extend(policy.violations("policy"));
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        Ok(Self {
            sim,
            initial: ctrl,
            ctrl,
            policy,
            umodel,
            base_seed,
            episode: 0,
            step: 0,
            state: 1.0,
        })
    }

    pub fn policy(&self) -> &RewardPolicy<f64> {
        &self.policy
    }

    pub fn control(&self) -> &TxopControl<f64> {
        &self.ctrl
    }

    fn window_seed(&self, step: u64) -> u64 {
        rng::derive_seed(self.base_seed, &[self.episode as u64, step])
    }
}

impl Environment for CoexEnv {
    fn reset(&mut self, episode: usize) -> Result<f64> {
        self.episode = episode;
        self.step = 0;
        self.ctrl = self.initial;
        let metrics = run_window(
            &crate::sim::reseed(&self.sim, self.window_seed(u64::MAX)),
            self.ctrl.t_nr,
        );
        self.state = observe_state(&metrics, &self.policy, &self.umodel)?;
        Ok(self.state)
    }

    fn step(&mut self, a: Action) -> Result<EnvStep> {
        let seed = self.window_seed(self.step as u64);
        let (out, ctrl) = env_step(&self.sim, &self.ctrl, self.state, a, &self.policy, &self.umodel, seed)?;
        self.ctrl = ctrl;
        self.state = out.next_state;
        self.step += 1;
        Ok(out)
    }

    fn txop(&self) -> f64 {
        self.ctrl.t_nr
    }
}
