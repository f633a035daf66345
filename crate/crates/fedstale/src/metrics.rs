//! Distance and divergence functions for staleness estimation.
//!
//! Seven metrics quantify how far the global model has drifted while a
//! client was training. Three of them (KL, Hellinger, Fisher-Rao) compare
//! probability distributions, so parameter vectors are first normalized via
//! [`to_distribution`]. All functions are pure and return finite,
//! non-negative values or an error.

use crate::error::{Error, Result};
use crate::params::ParamVector;

/// Slack for clamping tiny negative divergence sums caused by rounding.
const NEG_SLACK: f64 = 1e-9;

/// The seven supported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Euclidean,
    Manhattan,
    Cosine,
    Bregman,
    Hellinger,
    KlDivergence,
    FisherRao,
}

impl MetricKind {
    /// All variants, in canonical listing order.
    pub const ALL: [MetricKind; 7] = [
        MetricKind::Euclidean,
        MetricKind::Manhattan,
        MetricKind::Cosine,
        MetricKind::Bregman,
        MetricKind::Hellinger,
        MetricKind::KlDivergence,
        MetricKind::FisherRao,
    ];

    /// The lowercase token used in config files and CSV output.
    pub fn token(&self) -> &'static str {
        match self {
            MetricKind::Euclidean => "euclidean",
            MetricKind::Manhattan => "manhattan",
            MetricKind::Cosine => "cosine",
            MetricKind::Bregman => "bregman",
            MetricKind::Hellinger => "hellinger",
            MetricKind::KlDivergence => "kl",
            MetricKind::FisherRao => "fisher",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .iter()
            .copied()
            .find(|k| k.token() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = MetricKind::ALL.iter().map(|k| k.token()).collect();
                Error::Config(format!(
                    "unknown metric {s:?}; valid metrics are {}",
                    names.join(", ")
                ))
            })
    }
}

/// Convex generator for the Bregman divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BregmanGenerator {
    /// φ(x) = ½‖x‖₂²; the induced divergence is half the squared
    /// Euclidean distance.
    #[default]
    SquaredNorm,
    /// φ(x) = Σ xᵢ ln xᵢ on strictly positive vectors; asymmetric.
    NegativeEntropy,
}

impl BregmanGenerator {
    /// Config token.
    pub fn token(&self) -> &'static str {
        match self {
            BregmanGenerator::SquaredNorm => "squared_norm",
            BregmanGenerator::NegativeEntropy => "negative_entropy",
        }
    }

    fn phi(&self, x: &[f64]) -> Result<f64> {
        match self {
            BregmanGenerator::SquaredNorm => {
                let mut acc = 0.0;
                for v in x {
                    acc += v * v;
                }
                Ok(0.5 * acc)
            }
            BregmanGenerator::NegativeEntropy => {
                let mut acc = 0.0;
                for v in x {
                    if *v <= 0.0 {
                        return Err(Error::Domain(
                            "negative-entropy generator requires strictly positive entries".into(),
                        ));
                    }
                    acc += v * v.ln();
                }
                Ok(acc)
            }
        }
    }

    fn grad_phi(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            BregmanGenerator::SquaredNorm => Ok(y.to_vec()),
            BregmanGenerator::NegativeEntropy => y
                .iter()
                .map(|v| {
                    if *v <= 0.0 {
                        Err(Error::Domain(
                            "negative-entropy generator requires strictly positive entries".into(),
                        ))
                    } else {
                        Ok(1.0 + v.ln())
                    }
                })
                .collect(),
        }
    }
}

impl std::str::FromStr for BregmanGenerator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_norm" => Ok(BregmanGenerator::SquaredNorm),
            "negative_entropy" => Ok(BregmanGenerator::NegativeEntropy),
            other => Err(Error::Config(format!(
                "unknown Bregman generator {other:?}; valid generators are squared_norm, negative_entropy"
            ))),
        }
    }
}

/// A discrete probability distribution: strictly positive entries that sum
/// to one within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    values: Vec<f64>,
}

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("probability vector must be non-empty".into()));
        }
        if !values.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Domain(
                "probability vector entries must be finite and strictly positive".into(),
            ));
        }
        let mut sum = 0.0;
        for v in &values {
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "probability vector sums to {sum}, expected 1 within 1e-9"
            )));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }
}

/// Options shared by the metric dispatcher: the smoothing floor used when
/// normalizing parameters into distributions and the Bregman generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub delta: f64,
    pub generator: BregmanGenerator,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            delta: 1e-12,
            generator: BregmanGenerator::default(),
        }
    }
}

fn check_lens(x: &ParamVector, y: &ParamVector) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(())
}

/// ‖x − y‖₂.
pub fn euclidean(x: &ParamVector, y: &ParamVector) -> Result<f64> {
    check_lens(x, y)?;
    let mut acc = 0.0;
    for (a, b) in x.values().iter().zip(y.values()) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// Σ|xᵢ − yᵢ|.
pub fn manhattan(x: &ParamVector, y: &ParamVector) -> Result<f64> {
    check_lens(x, y)?;
    let mut acc = 0.0;
    for (a, b) in x.values().iter().zip(y.values()) {
        acc += (a - b).abs();
    }
    Ok(acc)
}

/// 1 − cos(x, y), clamped to [0, 2].
///
/// Total on zero vectors: 0 when both are zero, 1 when exactly one is.
/// A degenerate early-training update should not abort a run.
pub fn cosine_distance(x: &ParamVector, y: &ParamVector) -> Result<f64> {
    check_lens(x, y)?;
    let nx = x.l2_norm();
    let ny = y.l2_norm();
    if nx == 0.0 && ny == 0.0 {
        return Ok(0.0);
    }
    if nx == 0.0 || ny == 0.0 {
        return Ok(1.0);
    }
    let dot = x.dot(y)?;
    Ok((1.0 - dot / (nx * ny)).clamp(0.0, 2.0))
}

/// D_φ(x, y) = φ(x) − φ(y) − ⟨∇φ(y), x − y⟩.
///
/// Evaluated from the generator directly, not from a per-generator closed
/// form, so the squared-Euclidean cross-check stays an independent identity.
pub fn bregman(x: &ParamVector, y: &ParamVector, generator: BregmanGenerator) -> Result<f64> {
    check_lens(x, y)?;
    let phi_x = generator.phi(x.values())?;
    let phi_y = generator.phi(y.values())?;
    let grad_y = generator.grad_phi(y.values())?;
    let mut inner = 0.0;
    for ((g, a), b) in grad_y.iter().zip(x.values()).zip(y.values()) {
        inner += g * (a - b);
    }
    let d = phi_x - phi_y - inner;
    finish_divergence(d, "bregman divergence")
}

/// Normalizes a parameter vector into a strictly positive distribution:
/// pᵢ = (|xᵢ| + δ)/Σⱼ(|xⱼ| + δ).
pub fn to_distribution(x: &ParamVector, delta: f64) -> Result<ProbVector> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!(
            "normalization delta must be positive and finite, got {delta}"
        )));
    }
    let mut total = 0.0;
    for v in x.values() {
        total += v.abs() + delta;
    }
    let p: Vec<f64> = x.values().iter().map(|v| (v.abs() + delta) / total).collect();
    ProbVector::new(p)
}

/// Σ pᵢ ln(pᵢ/qᵢ). Asymmetric.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    p.check_len(q)?;
    let mut acc = 0.0;
    for (a, b) in p.values().iter().zip(q.values()) {
        acc += a * (a / b).ln();
    }
    finish_divergence(acc, "KL divergence")
}

/// Squared Hellinger distance, ½·‖√p − √q‖₂². The difference form is exact
/// at p = q, where the product form Σ√(pᵢqᵢ) loses to rounding.
fn hellinger_sq(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    p.check_len(q)?;
    let mut acc = 0.0;
    for (a, b) in p.values().iter().zip(q.values()) {
        let d = a.sqrt() - b.sqrt();
        acc += d * d;
    }
    Ok((acc / 2.0).clamp(0.0, 1.0))
}

/// (1/√2)·‖√p − √q‖₂ ∈ [0, 1].
pub fn hellinger(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    Ok(hellinger_sq(p, q)?.sqrt())
}

/// Geodesic distance on the probability simplex: 2·arccos(BC) ∈ [0, π] with
/// Bhattacharyya coefficient BC = Σ√(pᵢqᵢ) = 1 − H²(p, q).
pub fn fisher_rao(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    // Going through the squared Hellinger distance keeps the coefficient
    // exact near 1, where arccos turns ulp noise into 1e-8 of distance.
    let bc = (1.0 - hellinger_sq(p, q)?).clamp(0.0, 1.0);
    Ok(2.0 * bc.acos())
}

fn finish_divergence(d: f64, what: &str) -> Result<f64> {
    if !d.is_finite() {
        return Err(Error::NonFinite { context: what.into() });
    }
    if d < 0.0 {
        if d > -NEG_SLACK {
            return Ok(0.0);
        }
        return Err(Error::Domain(format!("{what} evaluated to {d}, expected >= 0")));
    }
    Ok(d)
}

/// Dispatches to the chosen metric. Probabilistic metrics normalize both
/// arguments with [`to_distribution`] first.
pub fn distance(
    kind: MetricKind,
    x: &ParamVector,
    y: &ParamVector,
    cfg: &MetricConfig,
) -> Result<f64> {
    let d = match kind {
        MetricKind::Euclidean => euclidean(x, y)?,
        MetricKind::Manhattan => manhattan(x, y)?,
        MetricKind::Cosine => cosine_distance(x, y)?,
        MetricKind::Bregman => bregman(x, y, cfg.generator)?,
        MetricKind::Hellinger => {
            hellinger(&to_distribution(x, cfg.delta)?, &to_distribution(y, cfg.delta)?)?
        }
        MetricKind::KlDivergence => {
            kl_divergence(&to_distribution(x, cfg.delta)?, &to_distribution(y, cfg.delta)?)?
        }
        MetricKind::FisherRao => {
            fisher_rao(&to_distribution(x, cfg.delta)?, &to_distribution(y, cfg.delta)?)?
        }
    };
    if !d.is_finite() || d < 0.0 {
        return Err(Error::NonFinite {
            context: format!("{kind} distance"),
        });
    }
    Ok(d)
}
