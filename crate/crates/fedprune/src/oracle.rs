//! Brute-force reference computations for verifying the closed-form GSM
//! solvers.
//!
//! Everything here is written as direct scalar loops over explicit formulas,
//! sharing no code with the solver paths in [`crate::gsm`], so that
//! agreement between the two is evidence of correctness rather than
//! tautology. Used by the acceptance suite and the `oracle` CLI subcommand.

/// `f(θ) = aθ² + bθ + c·log(θ+ε)` — the θ-subproblem objective.
pub fn scalar_objective(a: f64, b: f64, c: f64, epsilon: f64, theta: f64) -> f64 {
    a * theta * theta + b * theta + c * (theta + epsilon).ln()
}

/// Grid minimum of the θ-subproblem over `[0, hi]` with the given step.
/// Returns `(argmin, min_value)`; θ = 0 is always on the grid.
pub fn scalar_grid_min(a: f64, b: f64, c: f64, epsilon: f64, hi: f64, step: f64) -> (f64, f64) {
    let mut best_theta = 0.0;
    let mut best_value = scalar_objective(a, b, c, epsilon, 0.0);
    let steps = (hi / step).floor() as usize;
    for k in 1..=steps {
        let theta = k as f64 * step;
        let value = scalar_objective(a, b, c, epsilon, theta);
        if value < best_value {
            best_value = value;
            best_theta = theta;
        }
    }
    (best_theta, best_value)
}

/// Full joint objective `‖s̃ − Λα‖² + σ²‖α‖² + 4σ² Σ log(θ_j+ε)`,
/// evaluated by a plain loop.
pub fn joint_objective(
    observed: &[f64],
    theta: &[f64],
    alpha: &[f64],
    sigma_sq: f64,
    epsilon: f64,
) -> f64 {
    assert_eq!(observed.len(), theta.len());
    assert_eq!(observed.len(), alpha.len());
    let mut total = 0.0;
    for j in 0..observed.len() {
        let r = observed[j] - theta[j] * alpha[j];
        total += r * r;
        total += sigma_sq * alpha[j] * alpha[j];
        total += 4.0 * sigma_sq * (theta[j] + epsilon).ln();
    }
    total
}

/// The terms of the joint objective that depend on a single θ_j, at the
/// given value. Differences of this across candidate values equal
/// differences of the full objective.
pub fn theta_coordinate_term(
    observed_j: f64,
    alpha_j: f64,
    sigma_sq: f64,
    epsilon: f64,
    theta: f64,
) -> f64 {
    let r = observed_j - theta * alpha_j;
    r * r + 4.0 * sigma_sq * (theta + epsilon).ln()
}

/// The terms of the joint objective that depend on a single α_j.
pub fn alpha_coordinate_term(observed_j: f64, theta_j: f64, sigma_sq: f64, alpha: f64) -> f64 {
    let r = observed_j - theta_j * alpha;
    r * r + sigma_sq * alpha * alpha
}

/// Minimum of the θ_j coordinate term over a grid on `[lo, hi]`
/// (lo clamped to 0). Returns `(argmin, min_value)`.
pub fn theta_coordinate_grid_min(
    observed_j: f64,
    alpha_j: f64,
    sigma_sq: f64,
    epsilon: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> (f64, f64) {
    let lo = lo.max(0.0);
    let mut best_theta = lo;
    let mut best_value = theta_coordinate_term(observed_j, alpha_j, sigma_sq, epsilon, lo);
    let steps = ((hi - lo) / step).floor() as usize;
    for k in 1..=steps {
        let theta = lo + k as f64 * step;
        let value = theta_coordinate_term(observed_j, alpha_j, sigma_sq, epsilon, theta);
        if value < best_value {
            best_value = value;
            best_theta = theta;
        }
    }
    (best_theta, best_value)
}

/// Minimum of the α_j coordinate term over a grid on `[lo, hi]`.
pub fn alpha_coordinate_grid_min(
    observed_j: f64,
    theta_j: f64,
    sigma_sq: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> (f64, f64) {
    let mut best_alpha = lo;
    let mut best_value = alpha_coordinate_term(observed_j, theta_j, sigma_sq, lo);
    let steps = ((hi - lo) / step).floor() as usize;
    for k in 1..=steps {
        let alpha = lo + k as f64 * step;
        let value = alpha_coordinate_term(observed_j, theta_j, sigma_sq, alpha);
        if value < best_value {
            best_value = value;
            best_alpha = alpha;
        }
    }
    (best_alpha, best_value)
}
