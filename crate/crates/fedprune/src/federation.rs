//! One communication round's moving parts: local client training,
//! data-size aggregation weights, deterministic weighted aggregation, and
//! global-model evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::contribution::{data_quality, model_difference, ContributionScore, ParamVector};
use crate::error::{Error, Result};
use crate::models::{batch_gradient, per_sample_loss, predict, ModelSpec, Sample};
use crate::seeding::{derive_seed, seeded_rng};
use crate::ClientId;

/// A client's slice of the experiment: its training samples and the latest
/// locally trained parameters and score.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: ClientId,
    pub samples: Vec<Sample>,
    pub local_params: ParamVector,
    pub last_score: Option<ContributionScore>,
}

impl ClientState {
    pub fn new(client_id: ClientId, samples: Vec<Sample>, initial_params: ParamVector) -> Self {
        ClientState {
            client_id,
            samples,
            local_params: initial_params,
            last_score: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    FedAvg,
    /// FedAvg plus a proximal pull toward the round's global parameters:
    /// each batch gradient gains μ·(w − w_global).
    FedProx {
        mu: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(Error::InvalidConfig(
                "local_epochs must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(
                "learning_rate must be finite and nonnegative".into(),
            ));
        }
        if let Optimizer::FedProx { mu } = self.optimizer {
            if !mu.is_finite() || mu <= 0.0 {
                return Err(Error::InvalidConfig(
                    "prox_mu must be positive for fedprox".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Data-size weights over the participating clients.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights {
    weights: BTreeMap<ClientId, f64>,
}

impl AggregationWeights {
    pub fn weights(&self) -> &BTreeMap<ClientId, f64> {
        &self.weights
    }
}

/// Local training for one round: E epochs of mini-batch SGD starting from
/// the broadcast global parameters, with a fresh deterministic shuffle per
/// epoch, followed by a scoring pass over the local training set with the
/// final local model.
pub fn client_update(
    state: &ClientState,
    global_params: &ParamVector,
    model: &ModelSpec,
    cfg: &TrainConfig,
    round: usize,
    seed: u64,
) -> Result<(ParamVector, ContributionScore)> {
    if state.samples.is_empty() {
        return Err(Error::EmptyClientData(state.client_id));
    }
    let mut w = global_params.clone();
    for epoch in 0..cfg.local_epochs {
        let mut order = state.samples.clone();
        order.shuffle(&mut seeded_rng(derive_seed(seed, &[epoch as u64])));
        for batch in order.chunks(cfg.batch_size) {
            let grad = batch_gradient(model, &w, batch)?;
            let (w_s, g_s) = (w.as_mut_slice(), grad.as_slice());
            match cfg.optimizer {
                Optimizer::FedAvg => {
                    for (wi, gi) in w_s.iter_mut().zip(g_s) {
                        *wi -= cfg.learning_rate * gi;
                    }
                }
                Optimizer::FedProx { mu } => {
                    for ((wi, gi), anchor) in w_s.iter_mut().zip(g_s).zip(global_params.as_slice())
                    {
                        *wi -= cfg.learning_rate * (gi + mu * (*wi - anchor));
                    }
                }
            }
        }
    }
    let mut losses = Vec::with_capacity(state.samples.len());
    for sample in &state.samples {
        losses.push(per_sample_loss(model, &w, sample)?);
    }
    let d = model_difference(&w, global_params)?;
    let q = data_quality(&losses, state.samples.len())?;
    let score = ContributionScore::new(state.client_id, round, d, q);
    Ok((w, score))
}

/// p_k = |D_k| / Σ_j |D_j| over the participating set only.
pub fn compute_weights(participants: &[&ClientState]) -> Result<AggregationWeights> {
    if participants.is_empty() {
        return Err(Error::NoParticipants);
    }
    let total: usize = participants.iter().map(|c| c.samples.len()).sum();
    if total == 0 {
        return Err(Error::EmptyClientData(participants[0].client_id));
    }
    let weights = participants
        .iter()
        .map(|c| (c.client_id, c.samples.len() as f64 / total as f64))
        .collect();
    Ok(AggregationWeights { weights })
}

/// Weighted sum of client updates, accumulated in ascending client order so
/// the result does not depend on how the updates were produced or stored.
pub fn aggregate(
    updates: &BTreeMap<ClientId, ParamVector>,
    weights: &AggregationWeights,
) -> Result<ParamVector> {
    if updates.is_empty() {
        return Err(Error::NoParticipants);
    }
    if updates.len() != weights.weights.len() || !updates.keys().eq(weights.weights.keys()) {
        return Err(Error::AggregationKeyMismatch);
    }
    let len = updates.values().next().expect("non-empty").len();
    let mut acc = ParamVector::zeros(len);
    for (id, update) in updates {
        if update.len() != len {
            return Err(Error::LengthMismatch {
                left: update.len(),
                right: len,
                context: "aggregate",
            });
        }
        acc.axpy(weights.weights[id], update);
    }
    Ok(acc)
}

/// Top-1 accuracy and mean cross-entropy of the global model on a test set.
pub fn evaluate(
    model: &ModelSpec,
    global_params: &ParamVector,
    test_samples: &[Sample],
) -> Result<(f64, f64)> {
    if test_samples.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for sample in test_samples {
        if predict(model, global_params, &sample.features)? == sample.label {
            correct += 1;
        }
        loss_sum += per_sample_loss(model, global_params, sample)?;
    }
    let n = test_samples.len() as f64;
    Ok((correct as f64 / n, loss_sum / n))
}
