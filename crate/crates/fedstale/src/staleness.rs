//! Staleness estimation and the adaptive aggregation coefficients built on
//! it.
//!
//! When an update arrives, the server measures how far the global model has
//! drifted since the client snapshotted it, relative to the size of the
//! client's own update: γ = D(current, base) / ‖Δ‖₂. The per-update global
//! learning rate is then λ/(γ + ε), so stale updates are damped smoothly
//! rather than dropped.

use crate::error::{Error, Result};
use crate::metrics::{self, BregmanGenerator, MetricConfig, MetricKind};
use crate::params::ParamVector;
use crate::sim::ModelSnapshot;

/// Floor for the update norm in the staleness quotient. A client whose
/// training produced no change would otherwise divide by zero.
pub const DENOM_FLOOR: f64 = 1e-12;

/// How many local epochs a client runs per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochRule {
    /// Always the same count.
    Fixed(u32),
    /// clamp(round(k_ref/(1+γ)), k_min, k_max): stale clients train less,
    /// which keeps their next update smaller and their staleness in check.
    InverseStaleness { k_ref: u32, k_min: u32, k_max: u32 },
}

impl EpochRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            EpochRule::Fixed(k) => {
                if *k == 0 {
                    return Err(Error::Config("fixed epoch count must be at least 1".into()));
                }
            }
            EpochRule::InverseStaleness { k_ref, k_min, k_max } => {
                if *k_ref == 0 || *k_min == 0 || *k_max == 0 {
                    return Err(Error::Config("epoch rule counts must all be at least 1".into()));
                }
                if k_min > k_max {
                    return Err(Error::Config(format!(
                        "epoch rule k_min {k_min} exceeds k_max {k_max}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Everything the server needs to weight one update.
#[derive(Debug, Clone, PartialEq)]
pub struct StalenessConfig {
    pub metric: MetricKind,
    /// Scaling factor λ of the adaptive learning rate.
    pub lambda: f64,
    /// Additive constant ε keeping the learning rate finite at γ = 0.
    pub epsilon: f64,
    /// Smoothing floor for normalizing parameters into distributions.
    pub delta: f64,
    pub generator: BregmanGenerator,
    pub epoch_rule: EpochRule,
}

impl StalenessConfig {
    pub fn new(metric: MetricKind, lambda: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self {
            metric,
            lambda,
            epsilon,
            delta: 1e-12,
            generator: BregmanGenerator::default(),
            epoch_rule: EpochRule::Fixed(3),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("epsilon", self.epsilon),
            ("delta", self.delta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "staleness {name} must be positive and finite, got {v}"
                )));
            }
        }
        self.epoch_rule.validate()
    }

    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig { delta: self.delta, generator: self.generator }
    }
}

/// γ = D(current, base) / max(‖Δ‖₂, floor).
///
/// `current` is the global model at delivery time, `base` the snapshot the
/// client trained from, `delta` the client's update.
pub fn compute_staleness(
    cfg: &StalenessConfig,
    current: &ModelSnapshot,
    base: &ModelSnapshot,
    delta: &ParamVector,
) -> Result<f64> {
    if current.version < base.version {
        return Err(Error::Domain(format!(
            "current version {} predates base version {}",
            current.version, base.version
        )));
    }
    let drift = metrics::distance(cfg.metric, &current.params, &base.params, &cfg.metric_config())?;
    let gamma = drift / delta.l2_norm().max(DENOM_FLOOR);
    if !gamma.is_finite() {
        return Err(Error::NonFinite { context: "staleness".into() });
    }
    Ok(gamma)
}

/// η = λ/(γ + ε): maximal trust for fresh updates, strictly decreasing in
/// staleness.
pub fn adaptive_lr(cfg: &StalenessConfig, gamma: f64) -> f64 {
    cfg.lambda / (gamma + cfg.epsilon)
}

/// Applies the epoch rule to a client's most recent staleness.
pub fn adjust_local_epochs(rule: &EpochRule, gamma: f64) -> u32 {
    match rule {
        EpochRule::Fixed(k) => *k,
        EpochRule::InverseStaleness { k_ref, k_min, k_max } => {
            let raw = (*k_ref as f64 / (1.0 + gamma)).round();
            (raw as u32).clamp(*k_min, *k_max)
        }
    }
}
