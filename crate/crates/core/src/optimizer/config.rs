use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// `eta_k = eta0 / sqrt(k)`.
    InverseSqrt,
    Constant,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::InverseSqrt => "invsqrt",
            Schedule::Constant => "constant",
        })
    }
}

impl FromStr for Schedule {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "invsqrt" | "inverse-sqrt" => Ok(Schedule::InverseSqrt),
            "constant" => Ok(Schedule::Constant),
            other => Err(LabError::param(format!(
                "unknown schedule `{other}` (expected invsqrt or constant)"
            ))),
        }
    }
}

/// A per-coordinate initial value: either one scalar broadcast to every
/// coordinate or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Broadcast {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Broadcast {
    pub fn resolve(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            Broadcast::Scalar(v) => Ok(vec![*v; d]),
            Broadcast::Vector(v) if v.len() == d => Ok(v.clone()),
            Broadcast::Vector(v) => Err(LabError::Dimension {
                expected: d,
                got: v.len(),
            }),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Broadcast::Scalar(v) => std::slice::from_ref(v),
            Broadcast::Vector(v) => v,
        }
    }

    pub fn min(&self) -> f64 {
        self.values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_zero(&self) -> bool {
        self.values().iter().all(|v| *v == 0.0)
    }
}

impl From<f64> for Broadcast {
    fn from(v: f64) -> Self {
        Broadcast::Scalar(v)
    }
}

/// Adam hyperparameters.
///
/// The update is `x ← x − eta_k · m / (sqrt(v) + eps)` with the moments
/// updated from the raw sampled gradient. Bias correction, when enabled, is
/// folded into the stepsize (see [`AdamConfig::stepsize`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eta0: f64,
    pub eps: f64,
    pub bias_correction: bool,
    pub m_init: Broadcast,
    pub v_init: Broadcast,
    pub schedule: Schedule,
}

/// Default `v_init` when `eps = 0`.
pub const TINY_V_INIT: f64 = 1e-12;

impl AdamConfig {
    /// `eta0 / sqrt(k)` schedule, `eps = 0`, `m_init = 0`, `v_init = 1e-12`,
    /// no bias correction.
    pub fn new(beta1: f64, beta2: f64, eta0: f64) -> Self {
        Self {
            beta1,
            beta2,
            eta0,
            eps: 0.0,
            bias_correction: false,
            m_init: Broadcast::Scalar(0.0),
            v_init: Broadcast::Scalar(TINY_V_INIT),
            schedule: Schedule::InverseSqrt,
        }
    }

    /// Sets `eps`. A positive `eps` also resets `v_init` to zero, matching the
    /// usual `eps = 1e-8, v_0 = 0` setup; call [`Self::with_v_init`] afterwards
    /// to override.
    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self.v_init = Broadcast::Scalar(if eps > 0.0 { 0.0 } else { TINY_V_INIT });
        self
    }

    pub fn with_v_init(mut self, v: impl Into<Broadcast>) -> Self {
        self.v_init = v.into();
        self
    }

    pub fn with_m_init(mut self, m: impl Into<Broadcast>) -> Self {
        self.m_init = m.into();
        self
    }

    pub fn with_bias_correction(mut self, on: bool) -> Self {
        self.bias_correction = on;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(LabError::param(format!(
                "beta1 must lie in [0, 1), got {}",
                self.beta1
            )));
        }
        if !(0.0..=1.0).contains(&self.beta2) {
            return Err(LabError::param(format!(
                "beta2 must lie in [0, 1], got {}",
                self.beta2
            )));
        }
        if !(self.eta0 > 0.0) || !self.eta0.is_finite() {
            return Err(LabError::param(format!(
                "eta0 must be positive, got {}",
                self.eta0
            )));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(LabError::param(format!(
                "eps must be nonnegative, got {}",
                self.eps
            )));
        }
        let v_min = self.v_init.min();
        if !(v_min >= 0.0) || v_min.is_infinite() {
            return Err(LabError::param("v_init must be finite and nonnegative"));
        }
        if self.m_init.values().iter().any(|m| !m.is_finite()) {
            return Err(LabError::param("m_init must be finite"));
        }
        if self.eps == 0.0 && v_min == 0.0 {
            return Err(LabError::param(
                "Adam is not well defined with eps = 0 and a zero v_init entry; \
                 use eps > 0 or a positive v_init",
            ));
        }
        Ok(())
    }

    /// Base stepsize `eta_k` before bias correction.
    pub fn base_stepsize(&self, k: u64) -> f64 {
        assert!(k >= 1, "stepsize counter is 1-based");
        match self.schedule {
            Schedule::InverseSqrt => self.eta0 / (k as f64).sqrt(),
            Schedule::Constant => self.eta0,
        }
    }

    /// Effective stepsize at counter `k`: `eta_k`, or
    /// `sqrt(1 - beta2^k) / (1 - beta1^k) · eta_k` with bias correction.
    pub fn stepsize(&self, k: u64) -> f64 {
        let eta = self.base_stepsize(k);
        if self.bias_correction {
            let c2 = 1.0 - pow_k(self.beta2, k);
            let c1 = 1.0 - pow_k(self.beta1, k);
            c2.sqrt() / c1 * eta
        } else {
            eta
        }
    }
}

/// `stepsize(config, k)`.
pub fn stepsize(config: &AdamConfig, k: u64) -> f64 {
    config.stepsize(k)
}

pub(crate) fn pow_k(base: f64, k: u64) -> f64 {
    match i32::try_from(k) {
        Ok(k) => base.powi(k),
        Err(_) => base.powf(k as f64),
    }
}
