//! Small differentiable classifiers with exact loss and gradient evaluation.
//!
//! Two kinds: plain linear softmax, and a one-hidden-layer MLP with tanh.
//! Parameters live in a flat [`ParamVector`], laid out per layer as row-major
//! weights followed by biases:
//!
//! * linear_softmax: `[W (C×D), b (C)]`
//! * mlp_one_hidden: `[W1 (H×D), b1 (H), W2 (C×H), b2 (C)]`

use crate::contribution::ParamVector;
use crate::error::{Error, Result};
use crate::seeding::seeded_rng;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LinearSoftmax,
    MlpOneHidden { hidden_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(
                "num_classes must be at least 2".into(),
            ));
        }
        if let ModelKind::MlpOneHidden { hidden_dim } = self.kind {
            if hidden_dim == 0 {
                return Err(Error::InvalidConfig("hidden_dim must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, c) = (self.input_dim, self.num_classes);
        match self.kind {
            ModelKind::LinearSoftmax => c * d + c,
            ModelKind::MlpOneHidden { hidden_dim: h } => h * d + h + c * h + c,
        }
    }

    /// Small random parameters, uniform in [−0.05, 0.05]; randomness breaks
    /// the hidden-layer symmetry of the MLP.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = seeded_rng(seed);
        ParamVector::new(
            (0..self.param_count())
                .map(|_| rng.random_range(-0.05..0.05))
                .collect(),
        )
    }
}

/// One labeled observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

fn check_dims(spec: &ModelSpec, params: &ParamVector, features: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::ParamDimension {
            got: params.len(),
            expected: spec.param_count(),
        });
    }
    if features.len() != spec.input_dim {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: spec.input_dim,
            context: "sample features",
        });
    }
    Ok(())
}

/// Forward pass; for the MLP also returns the hidden activations, which the
/// backward pass reuses.
fn forward(spec: &ModelSpec, params: &[f64], features: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
    let (d, c) = (spec.input_dim, spec.num_classes);
    match spec.kind {
        ModelKind::LinearSoftmax => {
            let (w, b) = (&params[..c * d], &params[c * d..]);
            let mut logits = vec![0.0; c];
            for k in 0..c {
                let mut z = b[k];
                for (j, x) in features.iter().enumerate() {
                    z += w[k * d + j] * x;
                }
                logits[k] = z;
            }
            (logits, None)
        }
        ModelKind::MlpOneHidden { hidden_dim: h } => {
            let w1 = &params[..h * d];
            let b1 = &params[h * d..h * d + h];
            let w2 = &params[h * d + h..h * d + h + c * h];
            let b2 = &params[h * d + h + c * h..];
            let mut hidden = vec![0.0; h];
            for i in 0..h {
                let mut z = b1[i];
                for (j, x) in features.iter().enumerate() {
                    z += w1[i * d + j] * x;
                }
                hidden[i] = z.tanh();
            }
            let mut logits = vec![0.0; c];
            for k in 0..c {
                let mut z = b2[k];
                for (i, hv) in hidden.iter().enumerate() {
                    z += w2[k * h + i] * hv;
                }
                logits[k] = z;
            }
            (logits, Some(hidden))
        }
    }
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// Softmax class probabilities for one input.
pub fn probabilities(spec: &ModelSpec, params: &ParamVector, features: &[f64]) -> Result<Vec<f64>> {
    check_dims(spec, params, features)?;
    let (logits, _) = forward(spec, params.as_slice(), features);
    let lse = log_sum_exp(&logits);
    Ok(logits.iter().map(|z| (z - lse).exp()).collect())
}

/// Cross-entropy of the softmax output against the sample's label,
/// computed in log-sum-exp form for stability.
pub fn per_sample_loss(spec: &ModelSpec, params: &ParamVector, sample: &Sample) -> Result<f64> {
    check_dims(spec, params, &sample.features)?;
    if sample.label >= spec.num_classes {
        return Err(Error::LabelOutOfRange {
            label: sample.label,
            num_classes: spec.num_classes,
        });
    }
    let (logits, _) = forward(spec, params.as_slice(), &sample.features);
    Ok(log_sum_exp(&logits) - logits[sample.label])
}

/// Predicted class: argmax of the logits, first maximum winning ties.
pub fn predict(spec: &ModelSpec, params: &ParamVector, features: &[f64]) -> Result<usize> {
    check_dims(spec, params, features)?;
    let (logits, _) = forward(spec, params.as_slice(), features);
    let mut best = 0;
    for (k, z) in logits.iter().enumerate() {
        if *z > logits[best] {
            best = k;
        }
    }
    Ok(best)
}

/// Mean gradient of [`per_sample_loss`] over a batch; same layout and
/// length as `params`.
pub fn batch_gradient(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &[Sample],
) -> Result<ParamVector> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grad = vec![0.0; spec.param_count()];
    for sample in batch {
        check_dims(spec, params, &sample.features)?;
        if sample.label >= spec.num_classes {
            return Err(Error::LabelOutOfRange {
                label: sample.label,
                num_classes: spec.num_classes,
            });
        }
        accumulate_gradient(spec, params.as_slice(), sample, &mut grad);
    }
    let scale = 1.0 / batch.len() as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok(ParamVector::new(grad))
}

fn accumulate_gradient(spec: &ModelSpec, params: &[f64], sample: &Sample, grad: &mut [f64]) {
    let (d, c) = (spec.input_dim, spec.num_classes);
    let x = &sample.features;
    let (logits, hidden) = forward(spec, params, x);
    let lse = log_sum_exp(&logits);
    // dL/dz_k = softmax_k − 1[k = label]
    let mut dz: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    dz[sample.label] -= 1.0;

    match spec.kind {
        ModelKind::LinearSoftmax => {
            let (gw, gb) = grad.split_at_mut(c * d);
            for k in 0..c {
                for j in 0..d {
                    gw[k * d + j] += dz[k] * x[j];
                }
                gb[k] += dz[k];
            }
        }
        ModelKind::MlpOneHidden { hidden_dim: h } => {
            let hidden = hidden.expect("mlp forward returns hidden activations");
            let w2 = &params[h * d + h..h * d + h + c * h];
            for k in 0..c {
                for i in 0..h {
                    grad[h * d + h + k * h + i] += dz[k] * hidden[i];
                }
                grad[h * d + h + c * h + k] += dz[k];
            }
            for i in 0..h {
                let mut dh = 0.0;
                for k in 0..c {
                    dh += w2[k * h + i] * dz[k];
                }
                // backprop through tanh
                let da = dh * (1.0 - hidden[i] * hidden[i]);
                for j in 0..d {
                    grad[i * d + j] += da * x[j];
                }
                grad[h * d + i] += da;
            }
        }
    }
}
