//! Quadratic model, predicted decreases, acceptance ratios and the parameter
//! update rules for `α`, `θ` and `π`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One-point model around the current serious point:
/// `Φ(d) = value + gᵀd + ½α‖d‖² + ½dᵀHd`.
///
/// `H` is the exact curvature of a smooth quadratic objective part (absent for
/// a pure oracle objective); `value` and `subgradient` then include that part.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub center: DVector<f64>,
    pub value: f64,
    pub subgradient: DVector<f64>,
    pub alpha: f64,
    pub smooth_hessian: Option<DMatrix<f64>>,
}

impl ModelState {
    pub fn new(center: DVector<f64>, value: f64, subgradient: DVector<f64>, alpha: f64) -> Self {
        Self {
            center,
            value,
            subgradient,
            alpha,
            smooth_hessian: None,
        }
    }

    pub fn with_smooth_hessian(mut self, hessian: Option<DMatrix<f64>>) -> Self {
        self.smooth_hessian = hessian;
        self
    }

    /// `½α‖d‖² + ½dᵀHd`
    fn curvature_term(&self, d: &DVector<f64>) -> f64 {
        let mut q = self.alpha * d.norm_squared();
        if let Some(h) = &self.smooth_hessian {
            q += d.dot(&(h * d));
        }
        0.5 * q
    }
}

/// Quantities computed for one trial step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEvaluation {
    pub delta: f64,
    pub delta_beta: Option<f64>,
    /// Penalty-model decrease, restoration phase only.
    pub delta_pi: Option<f64>,
    pub rho: f64,
    pub rho_beta: Option<f64>,
    pub trial_value: f64,
    pub accepted: bool,
}

/// Penalty parameters; `pi` exists once restoration has run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    pub theta: f64,
    pub pi: Option<f64>,
}

/// Optional decrease of `α` after a very successful serious step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaDecrease {
    pub enabled: bool,
    /// Decrease when actual decrease ≥ `eta_u_plus` · predicted decrease.
    pub eta_u_plus: f64,
    pub shrink: f64,
    pub floor: f64,
}

impl Default for AlphaDecrease {
    fn default() -> Self {
        Self {
            enabled: true,
            eta_u_plus: 0.9,
            shrink: 1.25,
            floor: 1e-8,
        }
    }
}

pub fn model_value(state: &ModelState, d: &DVector<f64>) -> f64 {
    state.value + state.subgradient.dot(d) + state.curvature_term(d)
}

/// `Φ(0) − Φ(βd) = −βgᵀd − ½β²(α‖d‖² + dᵀHd)`.
pub fn predicted_decrease(state: &ModelState, d: &DVector<f64>, beta: f64) -> f64 {
    -beta * state.subgradient.dot(d) - beta * beta * state.curvature_term(d)
}

/// Decrease of the penalty model: the smooth-model decrease plus the drop of
/// the linearized ℓ₁ violation, weighted by `π`.
pub fn penalty_predicted_decrease(
    state: &ModelState,
    d: &DVector<f64>,
    pi: f64,
    constraint_l1: f64,
    linearized_l1: f64,
) -> f64 {
    predicted_decrease(state, d, 1.0) + pi * constraint_l1 - pi * linearized_l1
}

/// `ρ = (value − trial_value) − η·δ` with `η = eta_plus` for `δ ≥ 0` and `eta_minus` otherwise.
pub fn acceptance_ratio(state: &ModelState, trial_value: f64, delta: f64, eta_plus: f64, eta_minus: f64) -> f64 {
    let actual = state.value - trial_value;
    let eta = if delta >= 0.0 { eta_plus } else { eta_minus };
    actual - eta * delta
}

pub fn update_alpha_on_reject(alpha: f64, eta_alpha: f64) -> f64 {
    debug_assert!(eta_alpha > 1.0);
    eta_alpha * alpha
}

/// Shrink `α` when the actual decrease of a serious step reached
/// `eta_u_plus` times the predicted one.
pub fn maybe_decrease_alpha(alpha: f64, actual: f64, delta: f64, cfg: &AlphaDecrease) -> f64 {
    if !cfg.enabled || !(delta > 0.0) || actual < cfg.eta_u_plus * delta {
        return alpha;
    }
    (alpha / cfg.shrink).max(cfg.floor).min(alpha)
}

/// `θ = max(θ_prev, η_γ⁻‖λ‖∞ + γ)`; after a restoration phase the previous
/// penalty `π` takes the place of `θ_prev`.
pub fn update_theta(
    prev: PenaltyParams,
    lambda_inf: f64,
    eta_gamma_minus: f64,
    gamma: f64,
    after_restoration: bool,
) -> PenaltyParams {
    let base = match (after_restoration, prev.pi) {
        (true, Some(pi)) => pi.max(prev.theta),
        _ => prev.theta,
    };
    PenaltyParams {
        theta: base.max(eta_gamma_minus * lambda_inf + gamma),
        pi: prev.pi,
    }
}

pub fn update_pi(prev_pi: f64, theta: f64, lambda_inf: f64, gamma_f: f64) -> f64 {
    prev_pi.max(theta).max(lambda_inf + gamma_f)
}
