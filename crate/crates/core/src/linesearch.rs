//! Backtracking line search on the constraint part of the merit function.
//!
//! The conditions never evaluate the objective: only `c` is re-evaluated
//! while halving `β`, and the objective is evaluated once afterwards.

use nalgebra::DVector;

use crate::error::{OracleError, SolverError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchSettings {
    pub eta_beta: f64,
    pub eta_gamma_minus: f64,
    pub max_halvings: usize,
}

/// Result of a successful search.
///
/// `merit_before`/`merit_after` are the constraint parts `w‖c‖₁` of the merit
/// function (`w = θ` in the normal phase, `w = π` in restoration).
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub beta: f64,
    pub trials: usize,
    pub satisfied: bool,
    pub merit_before: f64,
    pub merit_after: f64,
    pub point: DVector<f64>,
    /// `c` at `point`; empty when no constraints exist.
    pub constraint_values: DVector<f64>,
    pub constraint_evals: usize,
}

fn trial_point(
    x: &DVector<f64>,
    d: &DVector<f64>,
    beta: f64,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| (x[i] + beta * d[i]).clamp(lower[i], upper[i]))
}

/// Halve `β` from 1 until `accept(β, ‖c(x + βd)‖₁)` holds.
#[allow(clippy::too_many_arguments)]
fn backtrack<C, A>(
    x: &DVector<f64>,
    d: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    weight: f64,
    c_k: &DVector<f64>,
    max_halvings: usize,
    mut c_eval: C,
    accept: A,
) -> Result<LineSearchOutcome, SolverError>
where
    C: FnMut(&DVector<f64>) -> Result<DVector<f64>, OracleError>,
    A: Fn(f64, f64) -> bool,
{
    let mut beta = 1.0;
    for trials in 0..=max_halvings {
        let point = trial_point(x, d, beta, lower, upper);
        let c_new = c_eval(&point)?;
        let l1 = c_new.lp_norm(1);
        if accept(beta, l1) {
            return Ok(LineSearchOutcome {
                beta,
                trials,
                satisfied: true,
                merit_before: weight * c_k.lp_norm(1),
                merit_after: weight * l1,
                point,
                constraint_values: c_new,
                constraint_evals: trials + 1,
            });
        }
        beta *= 0.5;
    }
    Err(SolverError::LineSearchExhausted {
        halvings: max_halvings,
        beta: 2.0 * beta,
    })
}

/// Normal-phase condition
/// `θ‖c_k‖₁ − η_γ⁻β|λᵀc_k| ≥ θ‖c(x_k+βd)‖₁ − η_β·½αβ‖d‖²`.
///
/// Without constraints the condition reads `0 ≥ −η_β·½αβ‖d‖²` and `β = 1` is
/// returned without evaluating anything.
#[allow(clippy::too_many_arguments)]
pub fn search_normal<C>(
    x: &DVector<f64>,
    d: &DVector<f64>,
    lambda: &DVector<f64>,
    c_k: &DVector<f64>,
    theta: f64,
    alpha: f64,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    c_eval: C,
    settings: &LineSearchSettings,
) -> Result<LineSearchOutcome, SolverError>
where
    C: FnMut(&DVector<f64>) -> Result<DVector<f64>, OracleError>,
{
    if c_k.is_empty() {
        return Ok(LineSearchOutcome {
            beta: 1.0,
            trials: 0,
            satisfied: true,
            merit_before: 0.0,
            merit_after: 0.0,
            point: trial_point(x, d, 1.0, lower, upper),
            constraint_values: DVector::zeros(0),
            constraint_evals: 0,
        });
    }
    let c_l1 = c_k.lp_norm(1);
    let lam_c = lambda.dot(c_k).abs();
    let dd = d.norm_squared();
    let accept = |beta: f64, l1_new: f64| {
        normal_lhs(theta, c_l1, settings.eta_gamma_minus, beta, lam_c)
            >= theta * l1_new - settings.eta_beta * 0.5 * alpha * beta * dd
    };
    backtrack(x, d, lower, upper, theta, c_k, settings.max_halvings, c_eval, accept)
}

fn normal_lhs(theta: f64, c_l1: f64, eta: f64, beta: f64, lam_c_abs: f64) -> f64 {
    theta * c_l1 - eta * beta * lam_c_abs
}

/// Restoration-phase condition
/// `‖c_k‖₁ + (β/π)λᵀ∇cᵀd ≥ ‖c(x_k+βd)‖₁ − (η_β/π)·½αβ‖d‖²`.
///
/// `lambda_jd` is `λᵀ∇cᵀd` with the penalty-form multipliers.
#[allow(clippy::too_many_arguments)]
pub fn search_restoration<C>(
    x: &DVector<f64>,
    d: &DVector<f64>,
    lambda_jd: f64,
    c_k: &DVector<f64>,
    pi: f64,
    alpha: f64,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    c_eval: C,
    settings: &LineSearchSettings,
) -> Result<LineSearchOutcome, SolverError>
where
    C: FnMut(&DVector<f64>) -> Result<DVector<f64>, OracleError>,
{
    if c_k.is_empty() {
        return Err(SolverError::Precondition(
            "restoration line search needs at least one constraint".into(),
        ));
    }
    if !(pi > 0.0) {
        return Err(SolverError::Precondition(format!("penalty must be positive, got {pi}")));
    }
    let c_l1 = c_k.lp_norm(1);
    let dd = d.norm_squared();
    let accept = |beta: f64, l1_new: f64| {
        c_l1 + (beta / pi) * lambda_jd >= l1_new - (settings.eta_beta / pi) * 0.5 * alpha * beta * dd
    };
    backtrack(x, d, lower, upper, pi, c_k, settings.max_halvings, c_eval, accept)
}

/// Slacks `lhs − rhs` of
/// `θ‖c_k‖₁ + η·βλᵀc_k ≥ θ‖c_{k+1}‖₁ − η_β·½αβ‖d‖²`
/// for `η ∈ {1, η_γ⁺, η_γ⁻}` (in that order). All three are nonnegative
/// whenever the normal-phase condition holds at the same `β`.
#[allow(clippy::too_many_arguments)]
pub fn merit_inequality_slacks(
    theta: f64,
    c_l1_before: f64,
    c_l1_after: f64,
    lambda_c: f64,
    beta: f64,
    alpha: f64,
    d_norm_sq: f64,
    eta_beta: f64,
    eta_gamma_plus: f64,
    eta_gamma_minus: f64,
) -> [f64; 3] {
    let rhs = theta * c_l1_after - eta_beta * 0.5 * alpha * beta * d_norm_sq;
    [1.0, eta_gamma_plus, eta_gamma_minus].map(|eta| {
        // Written as θ‖c‖₁ − η·β·(−λᵀc) so that it rounds exactly like the
        // search condition when λᵀc < 0.
        let lhs = if lambda_c >= 0.0 {
            theta * c_l1_before + eta * beta * lambda_c
        } else {
            normal_lhs(theta, c_l1_before, eta, beta, -lambda_c)
        };
        lhs - rhs
    })
}
