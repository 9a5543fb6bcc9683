//! Per-client contribution scoring.
//!
//! A client's score for a round is the product of two terms: how far its
//! locally trained parameters moved from the previous global model
//! (squared Euclidean displacement) and a data-quality term that scales the
//! root-mean-square of its per-sample losses by the size of its local
//! dataset. Large displacement on a large, still-lossy dataset reads as
//! "this client still has something to teach the global model".

use crate::error::{Error, Result};
use crate::ClientId;

/// Flat model parameter vector; the unit of communication between server
/// and clients. Length is fixed per experiment by the model layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `self += c * other`. Lengths must already agree; callers validate.
    pub(crate) fn axpy(&mut self, c: f64, other: &ParamVector) {
        debug_assert_eq!(self.0.len(), other.0.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }
}

/// Score report for one client in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionScore {
    pub client_id: ClientId,
    pub round: usize,
    pub model_diff: f64,
    pub data_quality: f64,
    /// `model_diff * data_quality`.
    pub score: f64,
}

impl ContributionScore {
    pub fn new(client_id: ClientId, round: usize, model_diff: f64, data_quality: f64) -> Self {
        ContributionScore {
            client_id,
            round,
            model_diff,
            data_quality,
            score: contribution_score(model_diff, data_quality),
        }
    }
}

/// Squared Euclidean distance between a client's trained parameters and the
/// global parameters it started from.
pub fn model_difference(local: &ParamVector, global_prev: &ParamVector) -> Result<f64> {
    if local.len() != global_prev.len() {
        return Err(Error::LengthMismatch {
            left: local.len(),
            right: global_prev.len(),
            context: "model_difference",
        });
    }
    Ok(local
        .as_slice()
        .iter()
        .zip(global_prev.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Data-quality term: `data_size * sqrt(mean(losses^2))`.
///
/// `data_size` must equal the number of per-sample losses; it is passed
/// separately because it is the client's dataset size, not just a count.
pub fn data_quality(per_sample_losses: &[f64], data_size: usize) -> Result<f64> {
    if per_sample_losses.is_empty() {
        return Err(Error::EmptyLosses);
    }
    if per_sample_losses.len() != data_size {
        return Err(Error::LengthMismatch {
            left: per_sample_losses.len(),
            right: data_size,
            context: "data_quality",
        });
    }
    let mean_sq =
        per_sample_losses.iter().map(|l| l * l).sum::<f64>() / per_sample_losses.len() as f64;
    Ok(data_size as f64 * mean_sq.sqrt())
}

/// Combined contribution score.
pub fn contribution_score(model_diff: f64, data_quality: f64) -> f64 {
    model_diff * data_quality
}
