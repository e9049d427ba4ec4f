use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Contention and airtime parameters of one technology.
///
/// Times are in microseconds and the rate in Mb/s, so `rate_mbps * txop_us`
/// is the payload of one TXOP in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessConfig<T> {
    /// Contention window at stage 0 (W0), in slots.
    pub initial_window: u32,
    /// Highest backoff stage m.
    pub max_stage: u32,
    /// Upper bound on the contention window (CW_max), in slots.
    pub window_cap: u32,
    pub txop_us: T,
    pub defer_us: T,
    pub slot_us: T,
    pub rate_mbps: T,
}

impl<T: Scalar> AccessConfig<T> {
    /// Contention window at `stage`: `min(2^stage * W0, CW_max)`.
    pub fn window(&self, stage: u32) -> u32 {
        let doubled = (self.initial_window as u64)
            .checked_shl(stage.min(63))
            .unwrap_or(u64::MAX);
        doubled.min(self.window_cap as u64) as u32
    }

    pub fn windows(&self) -> Vec<u32> {
        (0..=self.max_stage).map(|j| self.window(j)).collect()
    }

    /// Number of (stage, counter) states of the backoff chain.
    pub fn state_count(&self) -> usize {
        self.windows().iter().map(|&w| w as usize).sum()
    }

    /// Channel occupancy of one transmission: defer plus TXOP.
    pub fn occupancy_us(&self) -> T {
        self.defer_us + self.txop_us
    }

    pub fn payload_bits(&self) -> T {
        self.rate_mbps * self.txop_us
    }

    pub fn with_txop(mut self, txop_us: T) -> Self {
        self.txop_us = txop_us;
        self
    }

    /// All invariant violations, each prefixed with `field_prefix`.
    pub fn violations(&self, field_prefix: &str) -> Vec<String> {
        let mut v = Vec::new();
        if self.initial_window < 2 {
            v.push(format!(
                "{field_prefix}.initial_window must be >= 2 (got {})",
                self.initial_window
            ));
        }
        if self.window_cap < self.initial_window {
            v.push(format!(
                "{field_prefix}.window_cap ({}) must be >= initial_window ({})",
                self.window_cap, self.initial_window
            ));
        }
        if self.max_stage > 30 {
            v.push(format!(
                "{field_prefix}.max_stage must be <= 30 (got {})",
                self.max_stage
            ));
        }
        for (name, val) in [
            ("txop_us", self.txop_us),
            ("slot_us", self.slot_us),
            ("rate_mbps", self.rate_mbps),
        ] {
            if !(val > T::zero() && val.is_finite()) {
                v.push(format!("{field_prefix}.{name} must be positive and finite (got {val})"));
            }
        }
        if !(self.defer_us >= T::zero() && self.defer_us.is_finite()) {
            v.push(format!(
                "{field_prefix}.defer_us must be non-negative (got {})",
                self.defer_us
            ));
        }
        v
    }

    pub fn validate(&self) -> crate::Result<()> {
        let v = self.violations("access");
        if v.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Validation(v))
        }
    }

    pub fn cast<U: Scalar>(&self) -> AccessConfig<U> {
        AccessConfig {
            initial_window: self.initial_window,
            max_stage: self.max_stage,
            window_cap: self.window_cap,
            txop_us: U::lit(self.txop_us.as_f64()),
            defer_us: U::lit(self.defer_us.as_f64()),
            slot_us: U::lit(self.slot_us.as_f64()),
            rate_mbps: U::lit(self.rate_mbps.as_f64()),
        }
    }
}
