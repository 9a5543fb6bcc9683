//! MAP denoising of contribution-score vectors under a Gaussian scale
//! mixture prior.
//!
//! Each observed score is modeled as s̃_j = θ_j·α_j + noise, with θ_j ≥ 0 a
//! hidden scale (Jeffrey's prior, giving a log penalty) and α_j a Gaussian
//! factor. The MAP estimate minimizes
//!
//! ```text
//! F(θ, α) = ‖s̃ − Λα‖₂² + σ_w²‖α‖₂² + 4σ_w² Σ_j log(θ_j + ε),   Λ = diag(θ)
//! ```
//!
//! by alternating exact block minimization: the θ-step decomposes into
//! per-coordinate scalar problems `aθ² + bθ + c·log(θ+ε)` solved in closed
//! form from their stationary points, and the α-step is an element-wise
//! ridge formula. Because every coordinate is separable, both steps are
//! global on their block, which makes the objective non-increasing.
//!
//! The log barrier is what prunes: for a small score the penalty term drags
//! its θ to exactly 0, so the reconstructed score collapses to zero while
//! large scores are only mildly shrunk.

use crate::error::{Error, Result};
use crate::ClientId;

/// Floor applied to the estimated noise variance so it stays positive.
pub const MIN_NOISE_VARIANCE: f64 = 1e-12;

/// Consistency constant relating MAD to the standard deviation of a normal.
pub const MAD_SCALE: f64 = 1.4826;

/// A round's scores, one per client, in a fixed client order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    values: Vec<f64>,
    client_ids: Vec<ClientId>,
}

impl ScoreVector {
    pub fn new(client_ids: Vec<ClientId>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyScores);
        }
        if values.len() != client_ids.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: client_ids.len(),
                context: "score vector",
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore(i));
        }
        Ok(ScoreVector { values, client_ids })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty vectors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn client_ids(&self) -> &[ClientId] {
        &self.client_ids
    }
}

/// How the noise variance σ_w² is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaEstimation {
    /// Use `sigma_w_sq` from the config as-is.
    Fixed,
    /// Robust estimate from the score vector itself: (1.4826·MAD)².
    RobustMad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsmConfig {
    pub sigma_w_sq: f64,
    /// Offset inside the log barrier; larger values zero less aggressively.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Relative objective change below which alternation stops.
    pub rel_tol: f64,
    pub sigma_estimation: SigmaEstimation,
}

impl Default for GsmConfig {
    fn default() -> Self {
        GsmConfig {
            sigma_w_sq: 1.0,
            epsilon: 1e-6,
            max_iters: 20,
            rel_tol: 1e-6,
            sigma_estimation: SigmaEstimation::RobustMad,
        }
    }
}

impl GsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma_w_sq.is_finite() || self.sigma_w_sq <= 0.0 {
            return Err(Error::InvalidConfig("sigma_w_sq must be positive".into()));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !self.rel_tol.is_finite() || self.rel_tol <= 0.0 {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Solver state after alternation: the two blocks and the final objective,
/// plus the objective after initialization and after each iteration (useful
/// for convergence diagnostics and monotonicity checks).
#[derive(Debug, Clone, PartialEq)]
pub struct GsmState {
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
}

/// Noise variance for a score vector, either fixed from the config or the
/// squared scaled median absolute deviation, floored at
/// [`MIN_NOISE_VARIANCE`].
pub fn estimate_noise_variance(scores: &ScoreVector, cfg: &GsmConfig) -> Result<f64> {
    match cfg.sigma_estimation {
        SigmaEstimation::Fixed => {
            if cfg.sigma_w_sq.is_nan() || cfg.sigma_w_sq <= 0.0 {
                return Err(Error::InvalidConfig("sigma_w_sq must be positive".into()));
            }
            Ok(cfg.sigma_w_sq)
        }
        SigmaEstimation::RobustMad => {
            let med = median(scores.values());
            let deviations: Vec<f64> = scores.values().iter().map(|v| (v - med).abs()).collect();
            let mad = median(&deviations);
            Ok(((MAD_SCALE * mad) * (MAD_SCALE * mad)).max(MIN_NOISE_VARIANCE))
        }
    }
}

fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Minimizes `f(θ) = aθ² + bθ + c·log(θ+ε)` over θ ≥ 0.
///
/// Stationary points satisfy `2aθ² + bθ(2 + ···) ` — concretely, with the
/// barrier offset taken to zero, `2aθ² + bθ + c = 0`, giving
/// Δ = b²/(16a²) − c/(2a) and the candidate pair −b/(4a) ± √Δ. The returned
/// minimizer is the best of `{0}` and the nonnegative stationary points,
/// all evaluated with ε kept inside the log.
pub fn solve_theta_scalar(a: f64, b: f64, c: f64, epsilon: f64) -> Result<f64> {
    if c.is_nan()
        || c <= 0.0
        || epsilon.is_nan()
        || epsilon <= 0.0
        || !a.is_finite()
        || a < 0.0
        || !b.is_finite()
    {
        return Err(Error::InvalidGsmConstants);
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    let delta = (b * b) / (16.0 * a * a) - c / (2.0 * a);
    if delta < 0.0 {
        return Ok(0.0);
    }
    let f = |theta: f64| a * theta * theta + b * theta + c * (theta + epsilon).ln();
    let center = -b / (4.0 * a);
    let sqrt_delta = delta.sqrt();
    let mut best = 0.0;
    let mut best_value = f(0.0);
    for candidate in [center + sqrt_delta, center - sqrt_delta] {
        if candidate >= 0.0 {
            let value = f(candidate);
            if value < best_value {
                best_value = value;
                best = candidate;
            }
        }
    }
    Ok(best)
}

/// θ-step: per-coordinate scalar minimization with a_j = α_j²,
/// b_j = −2α_j·s̃_j, c = 4σ_w².
pub fn solve_theta(alpha: &[f64], scores: &ScoreVector, cfg: &GsmConfig) -> Result<Vec<f64>> {
    if alpha.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: alpha.len(),
            right: scores.len(),
            context: "solve_theta",
        });
    }
    let sigma_sq = estimate_noise_variance(scores, cfg)?;
    let c = 4.0 * sigma_sq;
    alpha
        .iter()
        .zip(scores.values())
        .map(|(&a_j, &s_j)| solve_theta_scalar(a_j * a_j, -2.0 * a_j * s_j, c, cfg.epsilon))
        .collect()
}

/// α-step: closed-form ridge update α_j = θ_j·s̃_j / (θ_j² + σ_w²).
pub fn solve_alpha(theta: &[f64], scores: &ScoreVector, cfg: &GsmConfig) -> Result<Vec<f64>> {
    if theta.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: theta.len(),
            right: scores.len(),
            context: "solve_alpha",
        });
    }
    let sigma_sq = estimate_noise_variance(scores, cfg)?;
    Ok(theta
        .iter()
        .zip(scores.values())
        .map(|(&t, &s)| t * s / (t * t + sigma_sq))
        .collect())
}

fn objective(theta: &[f64], alpha: &[f64], observed: &[f64], sigma_sq: f64, epsilon: f64) -> f64 {
    let mut residual = 0.0;
    let mut alpha_norm = 0.0;
    let mut barrier = 0.0;
    for j in 0..observed.len() {
        let r = observed[j] - theta[j] * alpha[j];
        residual += r * r;
        alpha_norm += alpha[j] * alpha[j];
        barrier += (theta[j] + epsilon).ln();
    }
    residual + sigma_sq * alpha_norm + 4.0 * sigma_sq * barrier
}

/// Runs the alternating solver on a score vector.
///
/// Initialization reproduces the observation exactly (θ = |s̃|, α = sign(s̃));
/// each iteration runs the θ-step then the α-step and stops once the
/// relative objective change drops below `rel_tol` or `max_iters` is hit.
/// The cleaned score is the reconstruction θ_j·α_j, returned with the same
/// client ordering as the input.
pub fn denoise_scores(scores: &ScoreVector, cfg: &GsmConfig) -> Result<(ScoreVector, GsmState)> {
    cfg.validate()?;
    let sigma_sq = estimate_noise_variance(scores, cfg)?;
    let observed = scores.values();

    let mut theta: Vec<f64> = observed.iter().map(|s| s.abs()).collect();
    let mut alpha: Vec<f64> = observed
        .iter()
        .map(|s| {
            if *s > 0.0 {
                1.0
            } else if *s < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();

    let mut current = objective(&theta, &alpha, observed, sigma_sq, cfg.epsilon);
    let mut trace = vec![current];

    for _ in 0..cfg.max_iters {
        theta = solve_theta(&alpha, scores, cfg)?;
        alpha = solve_alpha(&theta, scores, cfg)?;
        let next = objective(&theta, &alpha, observed, sigma_sq, cfg.epsilon);
        trace.push(next);
        let change = (current - next).abs();
        let scale = current.abs().max(MIN_NOISE_VARIANCE);
        current = next;
        if change < cfg.rel_tol * scale {
            break;
        }
    }

    let clean: Vec<f64> = theta.iter().zip(&alpha).map(|(t, a)| t * a).collect();
    let clean = ScoreVector::new(scores.client_ids().to_vec(), clean)?;
    let state = GsmState {
        theta,
        alpha,
        objective: current,
        objective_trace: trace,
    };
    Ok((clean, state))
}
