//! Experiment files: a JSON document merged over built-in defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::StabilizationCriterion;
use crate::access::{lone_node_throughput, AccessConfig};
use crate::agents::{AgentConfig, AgentKind};
use crate::env::{PolicyName, RewardPolicy, TxopControl};
use crate::metrics::UtilityModel;
use crate::sim::SimConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Built-in defaults; every key a file may set appears here.
pub const DEFAULTS_JSON: &str = include_str!("../../defaults/experiment.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "LBT")]
    Lbt,
    Q1,
    Q2,
    Q2u,
    QLearning,
    #[serde(rename = "DDQN")]
    Ddqn,
    #[serde(rename = "MAB")]
    Mab,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Lbt,
        Scheme::Q1,
        Scheme::Q2,
        Scheme::Q2u,
        Scheme::QLearning,
        Scheme::Ddqn,
        Scheme::Mab,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Lbt => "LBT",
            Scheme::Q1 => "Q1",
            Scheme::Q2 => "Q2",
            Scheme::Q2u => "Q2u",
            Scheme::QLearning => "QLearning",
            Scheme::Ddqn => "DDQN",
            Scheme::Mab => "MAB",
        }
    }

    pub fn agent_kind(self) -> AgentKind {
        match self {
            Scheme::Lbt => AgentKind::FixedLbt,
            Scheme::Q1 | Scheme::Q2 | Scheme::Q2u => AgentKind::Dqn,
            Scheme::QLearning => AgentKind::QLearning,
            Scheme::Ddqn => AgentKind::Ddqn,
            Scheme::Mab => AgentKind::Mab,
        }
    }

    /// Reward policy of a DQN scheme; `None` for baselines.
    pub fn own_policy(self) -> Option<PolicyName> {
        match self {
            Scheme::Q1 => Some(PolicyName::Q1),
            Scheme::Q2 => Some(PolicyName::Q2),
            Scheme::Q2u => Some(PolicyName::Q2u),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub window_slots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxopSettings {
    pub alpha: f64,
    pub beta: f64,
    /// Episode start TXOP; `null` means the class upper bound.
    pub initial_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySettings {
    pub b_min: f64,
    /// `null` means the larger lone-node saturation throughput of the two
    /// technologies in the active class, NR-U at its longest TXOP.
    pub b_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySet {
    #[serde(rename = "Q1")]
    pub q1: RewardPolicy<f64>,
    #[serde(rename = "Q2")]
    pub q2: RewardPolicy<f64>,
    #[serde(rename = "Q2u")]
    pub q2u: RewardPolicy<f64>,
}

impl PolicySet {
    pub fn get(&self, name: PolicyName) -> &RewardPolicy<f64> {
        match name {
            PolicyName::Q1 => &self.q1,
            PolicyName::Q2 => &self.q2,
            PolicyName::Q2u => &self.q2u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSettings {
    pub t_min_us: f64,
    pub t_max_us: f64,
    pub wifi: AccessConfig<f64>,
    pub nru: AccessConfig<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSettings {
    /// Episodes averaged at the end of each run.
    pub tail_episodes: usize,
    /// Relative margin every pairwise ordering comparison must clear.
    pub ordering_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub n_pairs: Vec<usize>,
    pub priorities: Vec<u8>,
    pub schemes: Vec<Scheme>,
}

/// The full document after merging over defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub schema_version: u32,
    pub scheme: Scheme,
    pub n_pairs: usize,
    pub priority_class: u8,
    pub trials: usize,
    pub base_seed: u64,
    pub agent: AgentConfig,
    pub sim: SimSettings,
    pub txop: TxopSettings,
    pub utility: UtilitySettings,
    pub policies: PolicySet,
    /// Reward policy used by LBT, QLearning, DDQN and MAB.
    pub baseline_policy: PolicyName,
    /// Per priority class, keyed "1" to "4".
    pub classes: BTreeMap<String, ClassSettings>,
    pub stabilization: StabilizationCriterion,
    pub report: ReportSettings,
    pub sweep: SweepSpec,
}

impl Settings {
    pub fn defaults() -> Self {
        serde_json::from_str(DEFAULTS_JSON).expect("built-in defaults parse")
    }

    pub fn class(&self, priority: u8) -> Result<&ClassSettings> {
        self.classes
            .get(&priority.to_string())
            .ok_or_else(|| Error::validation(format!("no settings for priority class {priority}")))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            v.push(format!(
                "schema_version must be {SCHEMA_VERSION} (got {})",
                self.schema_version
            ));
        }
        if !(1..=10).contains(&self.n_pairs) {
            v.push(format!("n_pairs must be 1..10 (got {})", self.n_pairs));
        }
        if !(1..=4).contains(&self.priority_class) {
            v.push(format!("priority_class must be 1..4 (got {})", self.priority_class));
        }
        if self.trials == 0 {
            v.push("trials must be >= 1".into());
        }
        v.extend(self.agent.violations());
        if self.sim.window_slots < crate::sim::MIN_WINDOW_SLOTS {
            v.push(format!(
                "sim.window_slots must be >= {} (got {})",
                crate::sim::MIN_WINDOW_SLOTS,
                self.sim.window_slots
            ));
        }
        if !(self.txop.alpha > 1.0) {
            v.push(format!("txop.alpha must be > 1 (got {})", self.txop.alpha));
        }
        if !(self.txop.beta > 0.0 && self.txop.beta < 1.0) {
            v.push(format!("txop.beta must lie in (0, 1) (got {})", self.txop.beta));
        }
        if !(self.utility.b_min > 0.0) {
            v.push(format!("utility.b_min must be positive (got {})", self.utility.b_min));
        }
        if let Some(b_max) = self.utility.b_max {
            if !(b_max > self.utility.b_min) {
                v.push(format!(
                    "utility.b_max ({b_max}) must exceed utility.b_min ({})",
                    self.utility.b_min
                ));
            }
        }
        for (key, name) in [("Q1", PolicyName::Q1), ("Q2", PolicyName::Q2), ("Q2u", PolicyName::Q2u)] {
            let p = self.policies.get(name);
            if p.name != name {
                v.push(format!("policies.{key}.name must be {key}"));
            }
            v.extend(p.violations(&format!("policies.{key}")));
        }
        for key in self.classes.keys() {
            if !matches!(key.as_str(), "1" | "2" | "3" | "4") {
                v.push(format!("classes.{key}: class keys must be 1..4"));
            }
        }
        for p in 1..=4u8 {
            let Some(c) = self.classes.get(&p.to_string()) else {
                v.push(format!("classes.{p} is missing"));
                continue;
            };
            v.extend(c.wifi.violations(&format!("classes.{p}.wifi")));
            v.extend(c.nru.violations(&format!("classes.{p}.nru")));
            if !(c.t_min_us > 0.0 && c.t_min_us <= c.t_max_us) {
                v.push(format!(
                    "classes.{p}: need 0 < t_min_us <= t_max_us (got {}, {})",
                    c.t_min_us, c.t_max_us
                ));
            }
            if c.wifi.slot_us != c.nru.slot_us {
                v.push(format!("classes.{p}: wifi and nru slot_us must match"));
            }
            if let Some(t0) = self.txop.initial_us {
                if !(t0 >= c.t_min_us && t0 <= c.t_max_us) {
                    v.push(format!(
                        "txop.initial_us ({t0}) lies outside classes.{p} bounds [{}, {}]",
                        c.t_min_us, c.t_max_us
                    ));
                }
            }
        }
        v.extend(self.stabilization.violations());
        if self.report.tail_episodes == 0 {
            v.push("report.tail_episodes must be positive".into());
        }
        if !(self.report.ordering_margin >= 0.0) {
            v.push("report.ordering_margin must be non-negative".into());
        }
        if self.sweep.n_pairs.is_empty() || self.sweep.n_pairs.iter().any(|n| !(1..=10).contains(n)) {
            v.push("sweep.n_pairs must be a non-empty list of values in 1..10".into());
        }
        if self.sweep.priorities.is_empty() || self.sweep.priorities.iter().any(|p| !(1..=4).contains(p)) {
            v.push("sweep.priorities must be a non-empty list of values in 1..4".into());
        }
        if self.sweep.schemes.is_empty() {
            v.push("sweep.schemes must not be empty".into());
        }
        v
    }
}

/// One fully resolved experiment cell.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub n_pairs: usize,
    pub priority_class: u8,
    pub agent: AgentConfig,
    pub sim: SimConfig,
    pub txop: TxopControl<f64>,
    pub utility: UtilityModel<f64>,
    pub policy: RewardPolicy<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub stabilization: StabilizationCriterion,
    pub settings: Settings,
    /// Top-level and section keys the file left to defaults.
    pub defaulted: Vec<String>,
}

impl ExperimentConfig {
    /// Validate `settings` and resolve its selected cell.
    pub fn from_settings(settings: Settings) -> Result<Self> {
        let v = settings.violations();
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        Self::resolve(settings, Vec::new())
    }

    fn resolve(settings: Settings, defaulted: Vec<String>) -> Result<Self> {
        let class = settings.class(settings.priority_class)?;
        let sim = SimConfig {
            n_wifi: settings.n_pairs,
            n_nru: settings.n_pairs,
            wifi: class.wifi,
            nru: class.nru,
            window_slots: settings.sim.window_slots,
            rng_seed: settings.base_seed,
        };
        let t0 = settings.txop.initial_us.unwrap_or(class.t_max_us);
        let txop = TxopControl::new(
            t0,
            settings.txop.alpha,
            settings.txop.beta,
            class.t_min_us,
            class.t_max_us,
            settings.priority_class,
        )?;
        let b_max = settings.utility.b_max.unwrap_or_else(|| {
            lone_node_throughput(&class.wifi).max(lone_node_throughput(&class.nru.with_txop(class.t_max_us)))
        });
        let utility = UtilityModel::new(settings.utility.b_min, b_max)?;
        let policy_name = settings.scheme.own_policy().unwrap_or(settings.baseline_policy);
        let policy = *settings.policies.get(policy_name);
        Ok(Self {
            scheme: settings.scheme,
            n_pairs: settings.n_pairs,
            priority_class: settings.priority_class,
            agent: settings.agent.clone(),
            sim,
            txop,
            utility,
            policy,
            trials: settings.trials,
            base_seed: settings.base_seed,
            stabilization: settings.stabilization,
            settings,
            defaulted,
        })
    }

    /// The same experiment at another grid cell.
    pub fn cell(&self, scheme: Scheme, priority_class: u8, n_pairs: usize) -> Result<Self> {
        let mut s = self.settings.clone();
        s.scheme = scheme;
        s.priority_class = priority_class;
        s.n_pairs = n_pairs;
        let v = s.violations();
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        Self::resolve(s, self.defaulted.clone())
    }
}

fn merge(base: &mut Value, over: &Value, path: &str, unknown: &mut Vec<String>) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let child = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, &child, unknown),
                    None => unknown.push(format!("unknown field `{child}`")),
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn defaulted_keys(defaults: &Value, user: &Value) -> Vec<String> {
    let mut out = Vec::new();
    if let (Value::Object(d), Value::Object(u)) = (defaults, user) {
        for (k, dv) in d {
            match u.get(k) {
                None => out.push(k.clone()),
                Some(uv) if k != "classes" => {
                    if let (Value::Object(dsub), Value::Object(usub)) = (dv, uv) {
                        out.extend(
                            dsub.keys()
                                .filter(|sk| !usub.contains_key(*sk))
                                .map(|sk| format!("{k}.{sk}")),
                        );
                    }
                }
                Some(_) => {}
            }
        }
    }
    out
}

/// Parse an experiment document, merge it over the defaults and validate.
/// Every unknown key and every invariant violation is reported at once.
pub fn load_config_str(text: &str) -> Result<ExperimentConfig> {
    let user: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if !user.is_object() {
        return Err(Error::Parse("experiment file must be a JSON object".into()));
    }
    let defaults: Value = serde_json::from_str(DEFAULTS_JSON).expect("built-in defaults parse");
    let mut problems = Vec::new();
    if user.get("schema_version").is_none() {
        problems.push("schema_version is required".to_string());
    }
    let mut merged = defaults.clone();
    merge(&mut merged, &user, "", &mut problems);
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    let settings: Settings = serde_json::from_value(merged).map_err(|e| Error::Parse(e.to_string()))?;
    let v = settings.violations();
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    ExperimentConfig::resolve(settings, defaulted_keys(&defaults, &user))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    load_config_str(&text)
}
