use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Windowed-mean stabilization test on a per-episode reward trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizationCriterion {
    /// Episodes per moving-average window.
    pub window: usize,
    pub rel_tol: f64,
    /// Consecutive windows that must stay within tolerance.
    pub hold: usize,
}

impl Default for StabilizationCriterion {
    fn default() -> Self {
        Self {
            window: 50,
            rel_tol: 0.05,
            hold: 50,
        }
    }
}

impl StabilizationCriterion {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.window < 2 {
            v.push(format!("stabilization.window must be >= 2 (got {})", self.window));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            v.push(format!(
                "stabilization.rel_tol must lie in (0, 1) (got {})",
                self.rel_tol
            ));
        }
        if self.hold == 0 {
            v.push("stabilization.hold must be positive".into());
        }
        v
    }
}

/// First episode `t*` (1-based) at which the moving average has stayed
/// within `rel_tol` of its value at the start of the hold span for `hold`
/// consecutive episodes.
///
/// With `mu_t` the mean of episodes `t-W+1..=t`, a span starting at `a`
/// passes when `|mu_t - mu_a| <= rel_tol |mu_a|` for every `t` in
/// `a..a+hold`; then `t* = a + hold - 1`. Spans whose baseline is zero never
/// pass.
pub fn detect_stabilization(rewards: &[f64], crit: &StabilizationCriterion) -> Result<Option<usize>> {
    let v = crit.violations();
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    let w = crit.window;
    let needed = w + crit.hold - 1;
    if rewards.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: rewards.len(),
        });
    }
    // means[i] is mu at episode t = w + i.
    let mut means = Vec::with_capacity(rewards.len() - w + 1);
    let mut sum: f64 = rewards[..w].iter().sum();
    means.push(sum / w as f64);
    for t in w..rewards.len() {
        sum += rewards[t] - rewards[t - w];
        means.push(sum / w as f64);
    }
    for start in 0..=(means.len() - crit.hold) {
        let base = means[start];
        if base == 0.0 || !base.is_finite() {
            continue;
        }
        let tol = crit.rel_tol * base.abs();
        if means[start..start + crit.hold].iter().all(|m| (m - base).abs() <= tol) {
            return Ok(Some(w + start + crit.hold - 1));
        }
    }
    Ok(None)
}
