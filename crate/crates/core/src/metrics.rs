//! Fairness and utility of the two coexisting systems.

use std::fmt;
use std::sync::Arc;

use crate::{Error, Result, Scalar};

/// Jain's index for two users: `(a + b)^2 / (2 (a^2 + b^2))`.
pub fn jain_index<T: Scalar>(gamma_nr: T, gamma_wf: T) -> Result<T> {
    if gamma_nr < T::zero() || gamma_wf < T::zero() || !gamma_nr.is_finite() || !gamma_wf.is_finite() {
        return Err(Error::Domain(format!(
            "throughputs must be finite and non-negative (got {gamma_nr}, {gamma_wf})"
        )));
    }
    let sum_sq = gamma_nr * gamma_nr + gamma_wf * gamma_wf;
    if sum_sq == T::zero() {
        return Err(Error::UndefinedFairness);
    }
    let sum = gamma_nr + gamma_wf;
    Ok(sum * sum / (T::lit(2.0) * sum_sq))
}

/// Jain's index applied to the two systems' utilities.
pub fn utility_fairness<T: Scalar>(u_nr: T, u_wf: T) -> Result<T> {
    jain_index(u_nr, u_wf)
}

/// Monotone map from bandwidth to achievable throughput.
pub type ThroughputMap<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Normalized logarithmic utility: 0 at `b_min`, 1 at `b_max`.
#[derive(Clone)]
pub struct UtilityModel<T> {
    pub b_min: T,
    pub b_max: T,
    t_of_b: Option<ThroughputMap<T>>,
}

impl<T: Scalar> fmt::Debug for UtilityModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UtilityModel")
            .field("b_min", &self.b_min)
            .field("b_max", &self.b_max)
            .field("t_of_b", &if self.t_of_b.is_some() { "custom" } else { "identity" })
            .finish()
    }
}

impl<T: Scalar> UtilityModel<T> {
    /// Model with the identity bandwidth-to-throughput map.
    pub fn new(b_min: T, b_max: T) -> Result<Self> {
        let model = Self {
            b_min,
            b_max,
            t_of_b: None,
        };
        model.check()?;
        Ok(model)
    }

    /// Model with a custom map, which must be strictly increasing on
    /// `[b_min, b_max]` (checked on a 256-point grid).
    pub fn with_mapping(b_min: T, b_max: T, t_of_b: ThroughputMap<T>) -> Result<Self> {
        let model = Self {
            b_min,
            b_max,
            t_of_b: Some(t_of_b),
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if !(self.b_min > T::zero() && self.b_min < self.b_max && self.b_max.is_finite()) {
            return Err(Error::Domain(format!(
                "utility bounds need 0 < b_min < b_max (got {}, {})",
                self.b_min, self.b_max
            )));
        }
        if self.t_of_b.is_some() {
            let n = 256;
            let step = (self.b_max - self.b_min) / T::from_count(n);
            let mut prev = self.throughput(self.b_min);
            if !(prev > T::zero()) {
                return Err(Error::Domain("T(b_min) must be positive".into()));
            }
            for i in 1..=n {
                let cur = self.throughput(self.b_min + step * T::from_count(i));
                if !(cur > prev) {
                    return Err(Error::Domain("throughput map is not strictly increasing".into()));
                }
                prev = cur;
            }
        }
        Ok(())
    }

    pub fn has_identity_mapping(&self) -> bool {
        self.t_of_b.is_none()
    }

    fn throughput(&self, b: T) -> T {
        match &self.t_of_b {
            Some(f) => f(b),
            None => b,
        }
    }

    /// Raw utility of throughput `x`; below `b_min` it is negative and above
    /// `b_max` it exceeds one.
    pub fn utility(&self, x: T) -> Result<T> {
        if !(x > T::zero()) || !x.is_finite() {
            return Err(Error::Domain(format!("utility needs a positive throughput (got {x})")));
        }
        let base = self.throughput(self.b_min);
        Ok((self.throughput(x) / base).ln() / (self.throughput(self.b_max) / base).ln())
    }
}

/// Free-function form of [`UtilityModel::utility`].
pub fn utility<T: Scalar>(x: T, model: &UtilityModel<T>) -> Result<T> {
    model.utility(x)
}

/// Clamp a raw utility into `[floor, 1]`; non-finite or non-positive inputs
/// map to the floor.
pub fn clamp_utility<T: Scalar>(u: T, floor: T) -> T {
    if u.is_nan() {
        floor
    } else {
        u.max(floor).min(T::one())
    }
}
