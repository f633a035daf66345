//! Small trainable classifiers: logistic regression and a one-hidden-layer
//! ReLU MLP, both with hand-rolled forward and backward passes over flat
//! parameter vectors, plus plain SGD and seeded mini-batch local training.
//!
//! Softmax uses per-row max subtraction and the loss uses log-sum-exp, so
//! large logits never overflow.

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::rng::{self, Domain};

/// Architecture of a classifier over flat inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    Logistic { d_in: usize, n_classes: usize },
    Mlp { d_in: usize, d_hidden: usize, n_classes: usize },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ModelSpec::Logistic { d_in, n_classes } => *d_in >= 1 && *n_classes >= 1,
            ModelSpec::Mlp { d_in, d_hidden, n_classes } => {
                *d_in >= 1 && *d_hidden >= 1 && *n_classes >= 1
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid model spec {self:?}")))
        }
    }

    pub fn d_in(&self) -> usize {
        match self {
            ModelSpec::Logistic { d_in, .. } | ModelSpec::Mlp { d_in, .. } => *d_in,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            ModelSpec::Logistic { n_classes, .. } | ModelSpec::Mlp { n_classes, .. } => *n_classes,
        }
    }

    /// Total number of flattened parameters (weights then biases per layer).
    pub fn param_len(&self) -> usize {
        match self {
            ModelSpec::Logistic { d_in, n_classes } => d_in * n_classes + n_classes,
            ModelSpec::Mlp { d_in, d_hidden, n_classes } => {
                d_in * d_hidden + d_hidden + d_hidden * n_classes + n_classes
            }
        }
    }

    fn layers(&self) -> Vec<(usize, usize)> {
        match self {
            ModelSpec::Logistic { d_in, n_classes } => vec![(*d_in, *n_classes)],
            ModelSpec::Mlp { d_in, d_hidden, n_classes } => {
                vec![(*d_in, *d_hidden), (*d_hidden, *n_classes)]
            }
        }
    }
}

/// A batch of row-major inputs with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    d: usize,
    labels: Vec<usize>,
}

impl Batch {
    /// `inputs` is row-major with `labels.len()` rows of width `d`.
    pub fn new(inputs: Vec<f64>, d: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Domain("batch must contain at least one sample".into()));
        }
        if d == 0 {
            return Err(Error::Domain("batch input width must be positive".into()));
        }
        if inputs.len() != labels.len() * d {
            return Err(Error::Consistency(format!(
                "batch has {} input values, expected {} rows x {} columns",
                inputs.len(),
                labels.len(),
                d
            )));
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "batch input".into() });
        }
        Ok(Self { inputs, d, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    /// A new batch of the given rows, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Domain("cannot gather an empty batch".into()));
        }
        let mut inputs = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Domain(format!(
                    "row index {i} out of range for batch of {}",
                    self.len()
                )));
            }
            inputs.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, self.d, labels)
    }

    fn check_labels(&self, n_classes: usize) -> Result<()> {
        if let Some(bad) = self.labels.iter().find(|l| **l >= n_classes) {
            return Err(Error::Domain(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(())
    }
}

/// Glorot-uniform initialization: weights uniform in
/// ±√(6/(fan_in+fan_out)), biases zero. One RNG stream per layer.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut values = Vec::with_capacity(spec.param_len());
    for (layer, (fan_in, fan_out)) in spec.layers().into_iter().enumerate() {
        let mut rng = rng::stream(seed, Domain::Init, layer as u64, 0);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(rng::uniform_in(&mut rng, -bound, bound));
        }
        values.extend(std::iter::repeat(0.0).take(fan_out));
    }
    ParamVector::new(values)
}

struct Forward {
    /// Post-softmax class probabilities, row-major.
    probs: Vec<f64>,
    /// Per-row cross-entropy.
    losses: Vec<f64>,
    /// Hidden-layer activations (MLP only), row-major.
    hidden: Vec<f64>,
}

fn forward(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<Forward> {
    if params.len() != spec.param_len() {
        return Err(Error::LengthMismatch {
            expected: spec.param_len(),
            got: params.len(),
        });
    }
    if batch.width() != spec.d_in() {
        return Err(Error::LengthMismatch {
            expected: spec.d_in(),
            got: batch.width(),
        });
    }
    batch.check_labels(spec.n_classes())?;

    let n = batch.len();
    let c = spec.n_classes();
    let w = params.values();
    let mut probs = vec![0.0; n * c];
    let mut losses = vec![0.0; n];
    let mut hidden = Vec::new();
    if let ModelSpec::Mlp { d_hidden, .. } = spec {
        hidden = vec![0.0; n * d_hidden];
    }

    let mut logits = vec![0.0; c];
    for i in 0..n {
        let x = batch.row(i);
        match spec {
            ModelSpec::Logistic { d_in, .. } => {
                for k in 0..c {
                    let mut z = w[d_in * c + k];
                    for (j, xj) in x.iter().enumerate() {
                        z += w[k * d_in + j] * xj;
                    }
                    logits[k] = z;
                }
            }
            ModelSpec::Mlp { d_in, d_hidden, .. } => {
                let b1 = d_in * d_hidden;
                let w2 = b1 + d_hidden;
                let b2 = w2 + d_hidden * c;
                let h_row = &mut hidden[i * d_hidden..(i + 1) * d_hidden];
                for (m, h) in h_row.iter_mut().enumerate() {
                    let mut a = w[b1 + m];
                    for (j, xj) in x.iter().enumerate() {
                        a += w[m * d_in + j] * xj;
                    }
                    *h = a.max(0.0);
                }
                for k in 0..c {
                    let mut z = w[b2 + k];
                    for (m, hm) in h_row.iter().enumerate() {
                        z += w[w2 + k * d_hidden + m] * hm;
                    }
                    logits[k] = z;
                }
            }
        }

        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_exp = 0.0;
        for k in 0..c {
            let e = (logits[k] - max).exp();
            probs[i * c + k] = e;
            sum_exp += e;
        }
        for k in 0..c {
            probs[i * c + k] /= sum_exp;
        }
        losses[i] = max + sum_exp.ln() - logits[batch.labels()[i]];
    }

    Ok(Forward { probs, losses, hidden })
}

/// Mean softmax cross-entropy over the batch and its analytic gradient.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &Batch,
) -> Result<(f64, ParamVector)> {
    let fwd = forward(spec, params, batch)?;
    let n = batch.len();
    let c = spec.n_classes();
    let inv_n = 1.0 / n as f64;

    let mut loss = 0.0;
    for l in &fwd.losses {
        loss += l;
    }
    loss *= inv_n;

    let w = params.values();
    let mut grad = vec![0.0; params.len()];
    for i in 0..n {
        let x = batch.row(i);
        let label = batch.labels()[i];
        match spec {
            ModelSpec::Logistic { d_in, .. } => {
                for k in 0..c {
                    let dz = (fwd.probs[i * c + k] - if k == label { 1.0 } else { 0.0 }) * inv_n;
                    for (j, xj) in x.iter().enumerate() {
                        grad[k * d_in + j] += dz * xj;
                    }
                    grad[d_in * c + k] += dz;
                }
            }
            ModelSpec::Mlp { d_in, d_hidden, .. } => {
                let b1 = d_in * d_hidden;
                let w2 = b1 + d_hidden;
                let b2 = w2 + d_hidden * c;
                let h_row = &fwd.hidden[i * d_hidden..(i + 1) * d_hidden];
                let mut dh = vec![0.0; *d_hidden];
                for k in 0..c {
                    let dz = (fwd.probs[i * c + k] - if k == label { 1.0 } else { 0.0 }) * inv_n;
                    for (m, hm) in h_row.iter().enumerate() {
                        grad[w2 + k * d_hidden + m] += dz * hm;
                        dh[m] += w[w2 + k * d_hidden + m] * dz;
                    }
                    grad[b2 + k] += dz;
                }
                for (m, hm) in h_row.iter().enumerate() {
                    // ReLU passes gradient only where the unit fired
                    if *hm > 0.0 {
                        for (j, xj) in x.iter().enumerate() {
                            grad[m * d_in + j] += dh[m] * xj;
                        }
                        grad[b1 + m] += dh[m];
                    }
                }
            }
        }
    }

    if !loss.is_finite() {
        return Err(Error::NonFinite { context: "loss".into() });
    }
    Ok((loss, ParamVector::new(grad)?))
}

/// One exact SGD step: params − η·grad. No momentum, decay, or clipping.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, eta: f64) -> Result<ParamVector> {
    if !eta.is_finite() || eta <= 0.0 {
        return Err(Error::Domain(format!("step size must be positive, got {eta}")));
    }
    params.sub(&grad.scale(eta)?)
}

/// Runs `k` epochs of mini-batch SGD over the shard with seeded per-epoch
/// shuffles, returning the final parameters. The epoch index selects the
/// shuffle stream, so training is reproducible batch for batch.
pub fn local_train(
    spec: &ModelSpec,
    params: &ParamVector,
    shard: &Batch,
    k: u32,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<ParamVector> {
    if k == 0 {
        return Err(Error::Domain("local epoch count must be at least 1".into()));
    }
    if batch_size == 0 {
        return Err(Error::Domain("batch size must be at least 1".into()));
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::Domain(format!("local learning rate must be >= 0, got {lr}")));
    }
    let mut current = params.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    for epoch in 0..k {
        let mut rng = rng::stream(seed, Domain::Shuffle, epoch as u64, 0);
        rng::shuffle(&mut rng, &mut order);
        for chunk in order.chunks(batch_size) {
            let mini = shard.gather(chunk)?;
            let (_, grad) = loss_and_grad(spec, &current, &mini)?;
            if lr > 0.0 {
                current = sgd_step(&current, &grad, lr)?;
            }
        }
    }
    Ok(current)
}

/// Top-1 accuracy and mean cross-entropy on a held-out batch. Argmax ties
/// resolve to the lowest class index.
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, test: &Batch) -> Result<(f64, f64)> {
    let fwd = forward(spec, params, test)?;
    let c = spec.n_classes();
    let mut correct = 0usize;
    for i in 0..test.len() {
        let row = &fwd.probs[i * c..(i + 1) * c];
        let mut best = 0;
        for (k, p) in row.iter().enumerate() {
            if *p > row[best] {
                best = k;
            }
        }
        if best == test.labels()[i] {
            correct += 1;
        }
    }
    let mut loss = 0.0;
    for l in &fwd.losses {
        loss += l;
    }
    Ok((correct as f64 / test.len() as f64, loss / test.len() as f64))
}
