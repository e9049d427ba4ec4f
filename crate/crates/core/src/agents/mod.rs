//! Learning agents and baselines sharing one training loop.

mod network;
mod replay;

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use network::{
    argmax_action, ddqn_target, gradient_step, q_forward, select_action, sync_target, td_target, Layer, QNetwork,
};
pub use replay::{ReplayBuffer, Transition};

use crate::env::{Action, Environment};
use crate::{rng, Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_interval: u64,
    pub episodes: usize,
    /// Decision steps per episode.
    pub steps_per_episode: usize,
    /// Hidden layer widths of the Q-network.
    pub hidden_layers: Vec<usize>,
    /// Sliding window of the bandit's per-arm reward means.
    pub bandit_window: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            discount: 0.9,
            epsilon: 0.1,
            replay_capacity: 10_000,
            batch_size: 64,
            target_sync_interval: 100,
            episodes: 1000,
            steps_per_episode: 200,
            hidden_layers: vec![64, 64],
            bandit_window: 100,
        }
    }
}

impl AgentConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(format!(
                "agent.learning_rate must be positive (got {})",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.discount) {
            v.push(format!("agent.discount must lie in [0, 1) (got {})", self.discount));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            v.push(format!("agent.epsilon must lie in [0, 1] (got {})", self.epsilon));
        }
        for (name, val) in [
            ("replay_capacity", self.replay_capacity),
            ("batch_size", self.batch_size),
            ("target_sync_interval", self.target_sync_interval as usize),
            ("episodes", self.episodes),
            ("steps_per_episode", self.steps_per_episode),
            ("bandit_window", self.bandit_window),
        ] {
            if val == 0 {
                v.push(format!("agent.{name} must be positive"));
            }
        }
        if self.batch_size > self.replay_capacity {
            v.push(format!(
                "agent.batch_size ({}) must not exceed agent.replay_capacity ({})",
                self.batch_size, self.replay_capacity
            ));
        }
        if self.hidden_layers.contains(&0) {
            v.push("agent.hidden_layers entries must be positive".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Dqn,
    Ddqn,
    QLearning,
    Mab,
    FixedLbt,
}

/// One gradient step of DQN (or DDQN when `double`) on `batch`. Targets are
/// computed from `target_net` and held constant. Returns the pre-step loss.
pub fn dqn_update<T: Scalar>(
    net: &mut QNetwork<T>,
    batch: &[Transition<T>],
    target_net: &QNetwork<T>,
    cfg: &AgentConfig,
    double: bool,
) -> Result<T> {
    let gamma = T::lit(cfg.discount);
    let targets: Vec<T> = batch
        .iter()
        .map(|t| {
            if double {
                ddqn_target(t.r, t.s_next, net, target_net, gamma)
            } else {
                td_target(t.r, t.s_next, target_net, gamma)
            }
        })
        .collect();
    let inputs: Vec<(T, Action)> = batch.iter().map(|t| (t.s, t.a)).collect();
    gradient_step(net, &inputs, &targets, T::lit(cfg.learning_rate))
}

/// Number of state bins of the tabular learner: 21 on `[0, 2)` plus overflow.
pub const TABULAR_BINS: usize = 22;

pub fn tabular_bin(s: f64) -> usize {
    let width = 2.0 / (TABULAR_BINS - 1) as f64;
    if s >= 2.0 || s.is_nan() {
        TABULAR_BINS - 1
    } else {
        ((s.max(0.0) / width) as usize).min(TABULAR_BINS - 2)
    }
}

/// UCB1 over the three actions with sliding-window reward means.
#[derive(Debug, Clone, PartialEq)]
pub struct Ucb1 {
    window: usize,
    pulls: [u64; 3],
    recent: [VecDeque<f64>; 3],
}

impl Ucb1 {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            pulls: [0; 3],
            recent: Default::default(),
        }
    }

    pub fn means(&self) -> [f64; 3] {
        std::array::from_fn(|i| {
            let r = &self.recent[i];
            if r.is_empty() {
                0.0
            } else {
                r.iter().sum::<f64>() / r.len() as f64
            }
        })
    }

    /// Untried arms first (lowest index), then the highest upper bound.
    pub fn choose(&self) -> Action {
        if let Some(i) = self.pulls.iter().position(|&n| n == 0) {
            return Action::ALL[i];
        }
        let total: u64 = self.pulls.iter().sum();
        let means = self.means();
        let bounds: [f64; 3] =
            std::array::from_fn(|i| means[i] + (2.0 * (total as f64).ln() / self.pulls[i] as f64).sqrt());
        argmax_action(&bounds)
    }

    pub fn record(&mut self, a: Action, reward: f64) {
        let i = a.index();
        self.pulls[i] += 1;
        let r = &mut self.recent[i];
        if r.len() == self.window {
            r.pop_front();
        }
        r.push_back(reward);
    }
}

/// Greedy policy extracted after training.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PolicySnapshot {
    Network(QNetwork<f64>),
    Table(Vec<[f64; 3]>),
    Bandit { means: [f64; 3] },
    Fixed,
}

impl PolicySnapshot {
    pub fn greedy(&self, s: f64) -> Action {
        match self {
            PolicySnapshot::Network(net) => argmax_action(&net.forward(s)),
            PolicySnapshot::Table(q) => argmax_action(&q[tabular_bin(s)]),
            PolicySnapshot::Bandit { means } => argmax_action(means),
            PolicySnapshot::Fixed => Action::Unchanged,
        }
    }
}

/// Per-episode training record. Throughput, fairness and utility columns are
/// means over the episode's steps; `t_nr_us` is the TXOP after the last step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub mean_reward: f64,
    pub t_nr_us: f64,
    pub gamma_nr_mbps: f64,
    pub gamma_wf_mbps: f64,
    pub jain: f64,
    pub u_nr: f64,
    pub u_wf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLog {
    pub kind: AgentKind,
    pub episodes: Vec<EpisodeRecord>,
    pub policy: PolicySnapshot,
    pub parameter_updates: u64,
    pub target_syncs: u64,
}

impl TrainLog {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.mean_reward).collect()
    }

    /// Records of the last `n` episodes (all of them if fewer).
    pub fn tail(&self, n: usize) -> &[EpisodeRecord] {
        &self.episodes[self.episodes.len().saturating_sub(n)..]
    }
}

enum Learner {
    Deep {
        online: QNetwork<f64>,
        target: QNetwork<f64>,
        buffer: ReplayBuffer<f64>,
        double: bool,
    },
    Tabular(Vec<[f64; 3]>),
    Bandit(Ucb1),
    Fixed,
}

/// Train `kind` on `env` for `cfg.episodes` fixed-length episodes.
/// Deterministic in `seed` given a deterministic environment.
pub fn train<E: Environment>(env: &mut E, kind: AgentKind, cfg: &AgentConfig, seed: u64) -> Result<TrainLog> {
    cfg.validate()?;
    let mut rng: ChaCha8Rng = rng::stream(seed, 1);
    let mut learner = match kind {
        AgentKind::Dqn | AgentKind::Ddqn => {
            let online = QNetwork::random(&cfg.hidden_layers, &mut rng::stream(seed, 0));
            Learner::Deep {
                target: online.clone(),
                online,
                buffer: ReplayBuffer::new(cfg.replay_capacity),
                double: kind == AgentKind::Ddqn,
            }
        }
        AgentKind::QLearning => Learner::Tabular(vec![[0.0; 3]; TABULAR_BINS]),
        AgentKind::Mab => Learner::Bandit(Ucb1::new(cfg.bandit_window)),
        AgentKind::FixedLbt => Learner::Fixed,
    };
    let mut updates = 0u64;
    let mut syncs = 0u64;
    let mut records = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let mut s = env.reset(episode)?;
        let mut sums = [0.0f64; 6];
        for step in 0..cfg.steps_per_episode {
            let a = match &learner {
                Learner::Deep { online, .. } => select_action(online, s, cfg.epsilon, &mut rng),
                Learner::Tabular(q) => {
                    if cfg.epsilon > 0.0 && rand::Rng::gen::<f64>(&mut rng) < cfg.epsilon {
                        Action::ALL[rand::Rng::gen_range(&mut rng, 0..3)]
                    } else {
                        argmax_action(&q[tabular_bin(s)])
                    }
                }
                Learner::Bandit(b) => b.choose(),
                Learner::Fixed => Action::Unchanged,
            };
            let out = env.step(a)?;
            let tr = Transition {
                s,
                a,
                r: out.reward,
                s_next: out.next_state,
            };
            match &mut learner {
                Learner::Deep {
                    online,
                    target,
                    buffer,
                    double,
                } => {
                    buffer.push(tr);
                    if let Some(batch) = buffer.sample(cfg.batch_size, &mut rng) {
                        dqn_update(online, &batch, target, cfg, *double).map_err(|e| match e {
                            Error::TrainingDiverged { detail, .. } => Error::TrainingDiverged { episode, step, detail },
                            other => other,
                        })?;
                        updates += 1;
                        if sync_target(online, target, updates, cfg.target_sync_interval) {
                            syncs += 1;
                        }
                    }
                }
                Learner::Tabular(q) => {
                    let next = &q[tabular_bin(tr.s_next)];
                    let y = tr.r + cfg.discount * next.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let cell = &mut q[tabular_bin(tr.s)][a.index()];
                    *cell += cfg.learning_rate * (y - *cell);
                    updates += 1;
                }
                Learner::Bandit(b) => b.record(a, tr.r),
                Learner::Fixed => {}
            }
            for (acc, v) in sums.iter_mut().zip([
                out.reward,
                out.metrics.gamma_nr,
                out.metrics.gamma_wf,
                out.jain,
                out.u_nr,
                out.u_wf,
            ]) {
                *acc += v;
            }
            s = out.next_state;
        }
        let n = cfg.steps_per_episode as f64;
        records.push(EpisodeRecord {
            episode,
            mean_reward: sums[0] / n,
            t_nr_us: env.txop(),
            gamma_nr_mbps: sums[1] / n,
            gamma_wf_mbps: sums[2] / n,
            jain: sums[3] / n,
            u_nr: sums[4] / n,
            u_wf: sums[5] / n,
        });
    }

    let policy = match learner {
        Learner::Deep { online, .. } => PolicySnapshot::Network(online),
        Learner::Tabular(q) => PolicySnapshot::Table(q),
        Learner::Bandit(b) => PolicySnapshot::Bandit { means: b.means() },
        Learner::Fixed => PolicySnapshot::Fixed,
    };
    Ok(TrainLog {
        kind,
        episodes: records,
        policy,
        parameter_updates: updates,
        target_syncs: syncs,
    })
}
