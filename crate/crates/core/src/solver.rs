//! Main loop of the simplified bundle method with its consistency-restoration phase.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{
    acceptance_ratio, maybe_decrease_alpha, penalty_predicted_decrease, predicted_decrease, update_alpha_on_reject,
    update_pi, update_theta, AlphaDecrease, ModelState, PenaltyParams,
};
use crate::error::{OracleError, SolverError};
use crate::linesearch::{
    merit_inequality_slacks, search_normal, search_restoration, LineSearchOutcome, LineSearchSettings,
};
use crate::oracle::{OracleResponse, ProblemSpec};
use crate::qp::{solve_penalty, solve_standard, QpSettings, QpSolution, QpStatus, QpSubproblem};

/// Solver parameters. Defaults: all acceptance `η`'s equal to 1, `α₀ = 1`,
/// `ε = 1e-8`, `η_β = 0.5`, `η_α = 1.25`, `γ = γ_f = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub eta_l_plus: f64,
    pub eta_l_minus: f64,
    pub eta_gamma_plus: f64,
    pub eta_gamma_minus: f64,
    pub eta_beta: f64,
    pub eta_alpha: f64,
    pub gamma: f64,
    pub gamma_f: f64,
    pub alpha0: f64,
    /// Stop when `‖d‖ ≤ eps`.
    pub eps: f64,
    /// Restoration stops when the linearized violation is at most `eps_c` and the penalty-model decrease at most `eps`.
    pub eps_c: f64,
    /// Minimal linearized ℓ₁ violation that counts as inconsistent.
    pub feas_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub alpha_decrease: AlphaDecrease,
    /// Take full steps without a line search; only valid for affine constraints.
    pub convex_feasible_mode: bool,
    /// Use unit `η`'s in the acceptance tests of the restoration phase.
    pub restoration_simplification: bool,
    pub qp_tol: f64,
    pub active_tol: f64,
    pub qp_max_iter: usize,
    /// Record elapsed time per iteration (off keeps traces reproducible byte for byte).
    pub record_wall_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta_l_plus: 1.0,
            eta_l_minus: 1.0,
            eta_gamma_plus: 1.0,
            eta_gamma_minus: 1.0,
            eta_beta: 0.5,
            eta_alpha: 1.25,
            gamma: 1.0,
            gamma_f: 1.0,
            alpha0: 1.0,
            eps: 1e-8,
            eps_c: 1e-8,
            feas_tol: 1e-8,
            max_iter: 500,
            max_halvings: 60,
            alpha_decrease: AlphaDecrease::default(),
            convex_feasible_mode: false,
            restoration_simplification: true,
            qp_tol: 1e-9,
            active_tol: 1e-7,
            qp_max_iter: 200,
            record_wall_time: false,
        }
    }
}

impl SolverConfig {
    /// Check the parameter inequalities; the error names the first violated one.
    pub fn validate(&self) -> Result<(), SolverError> {
        let checks: [(bool, String); 17] = [
            (
                self.eta_l_plus > 0.0,
                format!("0 < eta_l_plus (eta_l_plus = {})", self.eta_l_plus),
            ),
            (
                self.eta_l_plus <= 1.0,
                format!("eta_l_plus <= 1 (eta_l_plus = {})", self.eta_l_plus),
            ),
            (
                self.eta_l_minus >= 1.0,
                format!("eta_l_minus >= 1 (eta_l_minus = {})", self.eta_l_minus),
            ),
            (
                self.eta_beta > 0.0,
                format!("0 < eta_beta (eta_beta = {})", self.eta_beta),
            ),
            (
                self.eta_beta < self.eta_gamma_plus,
                format!(
                    "eta_beta < eta_gamma_plus (eta_beta = {}, eta_gamma_plus = {})",
                    self.eta_beta, self.eta_gamma_plus
                ),
            ),
            (
                self.eta_gamma_plus <= 1.0,
                format!("eta_gamma_plus <= 1 (eta_gamma_plus = {})", self.eta_gamma_plus),
            ),
            (
                self.eta_gamma_minus >= 1.0,
                format!("eta_gamma_minus >= 1 (eta_gamma_minus = {})", self.eta_gamma_minus),
            ),
            (
                self.eta_alpha > 1.0,
                format!("eta_alpha > 1 (eta_alpha = {})", self.eta_alpha),
            ),
            (self.gamma > 0.0, format!("gamma > 0 (gamma = {})", self.gamma)),
            (self.gamma_f > 0.0, format!("gamma_f > 0 (gamma_f = {})", self.gamma_f)),
            (self.alpha0 > 0.0, format!("alpha0 > 0 (alpha0 = {})", self.alpha0)),
            (self.eps >= 0.0, format!("eps >= 0 (eps = {})", self.eps)),
            (self.eps_c >= 0.0, format!("eps_c >= 0 (eps_c = {})", self.eps_c)),
            (
                self.feas_tol > 0.0,
                format!("feas_tol > 0 (feas_tol = {})", self.feas_tol),
            ),
            (self.max_iter > 0, "max_iter > 0".to_string()),
            (
                !self.alpha_decrease.enabled || self.alpha_decrease.shrink > 1.0,
                format!("alpha_decrease.shrink > 1 (shrink = {})", self.alpha_decrease.shrink),
            ),
            (
                !self.alpha_decrease.enabled || self.alpha_decrease.floor > 0.0,
                format!("alpha_decrease.floor > 0 (floor = {})", self.alpha_decrease.floor),
            ),
        ];
        for (ok, what) in checks {
            // NaN parameters fail every comparison and land here as well.
            if !ok {
                return Err(SolverError::Config(format!("violated {what}")));
            }
        }
        Ok(())
    }

    /// Tolerance used to judge the reported KKT residuals.
    pub fn kkt_report_tol(&self) -> f64 {
        (10.0 * self.eps).max(1e-6)
    }

    fn qp_settings(&self) -> QpSettings {
        QpSettings {
            qp_tol: self.qp_tol,
            feas_tol: self.feas_tol,
            active_tol: self.active_tol,
            max_iter: self.qp_max_iter,
        }
    }

    fn line_search(&self) -> LineSearchSettings {
        LineSearchSettings {
            eta_beta: self.eta_beta,
            eta_gamma_minus: self.eta_gamma_minus,
            max_halvings: self.max_halvings,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Normal,
    Restoration,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Normal => "normal",
            Phase::Restoration => "restoration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Serious,
    Rejected,
    Terminated,
}

impl StepOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            StepOutcome::Serious => "serious",
            StepOutcome::Rejected => "rejected",
            StepOutcome::Terminated => "terminated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    ConvergedKkt,
    RestorationConvergedInfeasible,
    MaxIter,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::ConvergedKkt => "converged_kkt",
            SolveStatus::RestorationConvergedInfeasible => "restoration_converged_infeasible",
            SolveStatus::MaxIter => "max_iter",
        }
    }
}

/// One row per outer iteration.
///
/// `objective` and `merit` are taken at the serious point the iteration starts
/// from; `theta` is the value after this iteration's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub phase: Phase,
    pub alpha: f64,
    pub theta: f64,
    pub pi: Option<f64>,
    pub objective: f64,
    pub merit: f64,
    pub constraint_l1: f64,
    pub step_norm: f64,
    pub delta: f64,
    pub delta_beta: Option<f64>,
    pub rho: Option<f64>,
    pub rho_beta: Option<f64>,
    pub beta: Option<f64>,
    pub accepted: bool,
    pub outcome: StepOutcome,
    pub oracle_calls: usize,
    pub wall_time_ms: f64,
}

/// Data of one serious step, enough to re-check the line-search and merit
/// inequalities after the fact.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriousStepAudit {
    pub iter: usize,
    pub phase: Phase,
    /// `θ` in the normal phase, `π` in restoration.
    pub weight: f64,
    pub alpha: f64,
    pub beta: f64,
    pub d_norm_sq: f64,
    /// `λᵀc(x_k)` in the normal phase, `λᵀ∇c(x_k)ᵀd` in restoration.
    pub lambda_term: f64,
    pub c_l1_before: f64,
    pub c_l1_after: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub delta_beta: f64,
    pub eta_gamma_plus: f64,
    pub eta_gamma_minus: f64,
    pub eta_beta: f64,
}

impl SeriousStepAudit {
    pub fn merit_before(&self) -> f64 {
        self.objective_before + self.weight * self.c_l1_before
    }

    pub fn merit_after(&self) -> f64 {
        self.objective_after + self.weight * self.c_l1_after
    }

    /// Summed by component; subtracting the two merit values loses the
    /// tail steps to cancellation.
    pub fn merit_drop(&self) -> f64 {
        (self.objective_before - self.objective_after) + self.weight * (self.c_l1_before - self.c_l1_after)
    }

    /// `(η − η_β)·½·α·β·‖d‖²` with `η = min(η_γ⁺, 1)`; `η_γ⁺ = 1` in restoration.
    pub fn required_drop(&self, alpha: f64, beta: f64) -> f64 {
        (self.eta_gamma_plus.min(1.0) - self.eta_beta) * 0.5 * alpha * beta * self.d_norm_sq
    }

    /// Slacks of the three implied normal-phase inequalities; `None` in restoration.
    pub fn inequality_slacks(&self) -> Option<[f64; 3]> {
        (self.phase == Phase::Normal).then(|| {
            merit_inequality_slacks(
                self.weight,
                self.c_l1_before,
                self.c_l1_after,
                self.lambda_term,
                self.beta,
                self.alpha,
                self.d_norm_sq,
                self.eta_beta,
                self.eta_gamma_plus,
                self.eta_gamma_minus,
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub final_x: DVector<f64>,
    /// Total objective (smooth part included).
    pub final_objective: f64,
    pub kkt: KktResiduals,
    pub final_step_norm: f64,
    pub iterations: usize,
    pub serious_steps: usize,
    pub rejected_steps: usize,
    pub restoration_iterations: usize,
    pub oracle_calls: usize,
    pub constraint_evals: usize,
    pub final_alpha: f64,
    pub final_theta: f64,
    pub final_pi: Option<f64>,
    /// `‖c + ∇cᵀd‖₁` at the final restoration step.
    pub restoration_violation: Option<f64>,
    pub trace: Vec<IterationRecord>,
    pub audits: Vec<SeriousStepAudit>,
}

/// Error with the trace collected up to the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error} (after {} iterations)", trace.len())]
pub struct SolveFailure {
    pub error: SolverError,
    pub trace: Vec<IterationRecord>,
    pub last_x: DVector<f64>,
}

/// Stationarity, feasibility and complementarity residuals at `x` using the
/// multipliers of a QP solution; penalty-form multipliers are sign-normalized.
pub fn kkt_residuals(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    subgradient: &DVector<f64>,
    sol: &QpSolution,
) -> Result<KktResiduals, OracleError> {
    let (c, jac) = spec.evaluate_constraints(x)?;
    let lambda = sol.lambda_standard();
    let stat = subgradient - &jac * &lambda - &sol.zeta_lower + &sol.zeta_upper;
    let mut comp: f64 = 0.0;
    for i in 0..x.len() {
        comp = comp
            .max((sol.zeta_lower[i] * (x[i] - spec.lower()[i])).abs())
            .max((sol.zeta_upper[i] * (spec.upper()[i] - x[i])).abs());
    }
    Ok(KktResiduals {
        stationarity: stat.amax(),
        feasibility: if c.is_empty() { 0.0 } else { c.amax() },
        complementarity: comp,
    })
}

/// Run the method from `x0`.
pub fn solve(spec: &ProblemSpec, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<SolveReport, SolveFailure> {
    let fail = |error: SolverError| SolveFailure {
        error,
        trace: Vec::new(),
        last_x: x0.clone(),
    };
    cfg.validate().map_err(fail)?;
    if cfg.convex_feasible_mode && !spec.has_affine_constraints() {
        return Err(fail(SolverError::Config(
            "convex_feasible_mode requires affine constraints".into(),
        )));
    }
    spec.check_in_box(x0).map_err(|e| fail(e.into()))?;
    let mut run = Run::start(spec, x0, cfg).map_err(fail)?;
    match run.run() {
        Ok(report) => Ok(report),
        Err(error) => Err(SolveFailure {
            error,
            trace: run.trace,
            last_x: run.x,
        }),
    }
}

struct Run<'a> {
    spec: &'a ProblemSpec,
    cfg: &'a SolverConfig,
    qp: QpSettings,
    ls: LineSearchSettings,
    hessian: Option<DMatrix<f64>>,
    x: DVector<f64>,
    center: OracleResponse,
    c: DVector<f64>,
    jac: DMatrix<f64>,
    alpha: f64,
    params: PenaltyParams,
    phase: Phase,
    after_restoration: bool,
    oracle_calls: usize,
    constraint_evals: usize,
    serious: usize,
    rejected: usize,
    restoration_iters: usize,
    trace: Vec<IterationRecord>,
    audits: Vec<SeriousStepAudit>,
    started: Instant,
}

enum Step {
    Continue,
    Finished {
        status: SolveStatus,
        sol: QpSolution,
        violation: Option<f64>,
    },
}

/// Iteration data shared by both phases, filled in as the step progresses.
struct Pending {
    step_norm: f64,
    delta: f64,
    delta_beta: Option<f64>,
    rho: Option<f64>,
    rho_beta: Option<f64>,
    beta: Option<f64>,
}

impl<'a> Run<'a> {
    fn start(spec: &'a ProblemSpec, x0: &DVector<f64>, cfg: &'a SolverConfig) -> Result<Self, SolverError> {
        let x = spec.project_to_box(x0);
        let center = spec.evaluate_total(&x)?;
        let (c, jac) = spec.evaluate_constraints(&x)?;
        Ok(Self {
            spec,
            cfg,
            qp: cfg.qp_settings(),
            ls: cfg.line_search(),
            hessian: spec.smooth_term().map(|f| f.hessian.clone()),
            x,
            center,
            c,
            jac,
            alpha: cfg.alpha0,
            // θ_{-1} = γ keeps every penalty strictly positive.
            params: PenaltyParams {
                theta: cfg.gamma,
                pi: None,
            },
            phase: Phase::Normal,
            after_restoration: false,
            oracle_calls: 1,
            constraint_evals: 1,
            serious: 0,
            rejected: 0,
            restoration_iters: 0,
            trace: Vec::new(),
            audits: Vec::new(),
            started: Instant::now(),
        })
    }

    fn run(&mut self) -> Result<SolveReport, SolverError> {
        let mut last_sol = None;
        for iter in 0..self.cfg.max_iter {
            let step = match self.phase {
                Phase::Normal => self.normal_iteration(iter)?,
                Phase::Restoration => self.restoration_iteration(iter)?,
            };
            match step {
                (Step::Continue, sol) => last_sol = Some(sol),
                (Step::Finished { status, sol, violation }, _) => {
                    return self.report(status, Some(&sol), violation);
                }
            }
        }
        self.report(SolveStatus::MaxIter, last_sol.as_ref(), None)
    }

    fn model(&self) -> ModelState {
        ModelState::new(
            self.x.clone(),
            self.center.value,
            self.center.subgradient.clone(),
            self.alpha,
        )
        .with_smooth_hessian(self.hessian.clone())
    }

    fn subproblem(&self) -> QpSubproblem {
        QpSubproblem::new(
            self.alpha,
            self.center.subgradient.clone(),
            self.spec.lower() - &self.x,
            self.spec.upper() - &self.x,
        )
        .with_constraints(self.c.clone(), self.jac.clone())
        .with_extra_hessian(self.hessian.clone())
    }

    fn trial_point(&self, d: &DVector<f64>) -> DVector<f64> {
        self.spec.project_to_box(&(&self.x + d))
    }

    fn evaluate(&mut self, x: &DVector<f64>) -> Result<OracleResponse, SolverError> {
        self.oracle_calls += 1;
        Ok(self.spec.evaluate_total(x)?)
    }

    fn merit_weight(&self) -> f64 {
        match self.phase {
            Phase::Normal => self.params.theta,
            Phase::Restoration => self.params.pi.unwrap_or(self.params.theta),
        }
    }

    fn push_record(
        &mut self,
        iter: usize,
        phase: Phase,
        alpha: f64,
        p: Pending,
        outcome: StepOutcome,
        objective: f64,
        c_l1: f64,
        weight: f64,
    ) {
        let wall = if self.cfg.record_wall_time {
            self.started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        self.trace.push(IterationRecord {
            iter,
            phase,
            alpha,
            theta: self.params.theta,
            pi: self.params.pi,
            objective,
            merit: objective + weight * c_l1,
            constraint_l1: c_l1,
            step_norm: p.step_norm,
            delta: p.delta,
            delta_beta: p.delta_beta,
            rho: p.rho,
            rho_beta: p.rho_beta,
            beta: p.beta,
            accepted: outcome == StepOutcome::Serious,
            outcome,
            oracle_calls: self.oracle_calls,
            wall_time_ms: wall,
        });
    }

    fn accept(&mut self, ls: LineSearchOutcome, resp: OracleResponse) -> Result<(), SolverError> {
        self.x = ls.point;
        self.center = resp;
        let (c, jac) = self.spec.evaluate_constraints(&self.x)?;
        self.constraint_evals += 1;
        self.c = c;
        self.jac = jac;
        self.serious += 1;
        Ok(())
    }

    fn reject(&mut self) {
        self.alpha = update_alpha_on_reject(self.alpha, self.cfg.eta_alpha);
        self.rejected += 1;
    }

    fn normal_iteration(&mut self, iter: usize) -> Result<(Step, QpSolution), SolverError> {
        let sub = self.subproblem();
        let sol = solve_standard(&sub, &self.qp)?;
        if sol.status == QpStatus::Inconsistent {
            self.phase = Phase::Restoration;
            self.params.pi = Some(self.params.pi.unwrap_or(0.0).max(self.params.theta));
            return self.restoration_iteration(iter);
        }

        let cfg = self.cfg;
        let alpha = self.alpha;
        let objective = self.center.value;
        let c_l1 = self.c.lp_norm(1);
        let weight_before = self.merit_weight();
        let d = sol.step.clone();
        let model = self.model();
        let delta = predicted_decrease(&model, &d, 1.0);
        let mut pending = Pending {
            step_norm: d.norm(),
            delta,
            delta_beta: None,
            rho: None,
            rho_beta: None,
            beta: None,
        };
        if pending.step_norm <= cfg.eps {
            self.push_record(
                iter,
                Phase::Normal,
                alpha,
                pending,
                StepOutcome::Terminated,
                objective,
                c_l1,
                weight_before,
            );
            return Ok((
                Step::Finished {
                    status: SolveStatus::ConvergedKkt,
                    sol: sol.clone(),
                    violation: None,
                },
                sol,
            ));
        }

        let x_trial = self.trial_point(&d);
        let trial = self.evaluate(&x_trial)?;
        let rho = acceptance_ratio(&model, trial.value, delta, cfg.eta_l_plus, cfg.eta_l_minus);
        pending.rho = Some(rho);
        let lambda_inf = if self.c.is_empty() { 0.0 } else { sol.lambda_inf() };
        self.params = update_theta(
            self.params,
            lambda_inf,
            cfg.eta_gamma_minus,
            cfg.gamma,
            self.after_restoration,
        );
        self.after_restoration = false;
        let theta = self.params.theta;

        let mut outcome = StepOutcome::Rejected;
        if rho > 0.0 {
            let ls = if cfg.convex_feasible_mode || self.c.is_empty() {
                LineSearchOutcome {
                    beta: 1.0,
                    trials: 0,
                    satisfied: true,
                    merit_before: theta * c_l1,
                    merit_after: f64::NAN,
                    point: x_trial.clone(),
                    constraint_values: self.spec.constraint_values(&x_trial)?,
                    constraint_evals: usize::from(!self.c.is_empty()),
                }
            } else {
                let spec = self.spec;
                search_normal(
                    &self.x,
                    &d,
                    &sol.lambda,
                    &self.c,
                    theta,
                    alpha,
                    spec.lower(),
                    spec.upper(),
                    |p| spec.constraint_values(p),
                    &self.ls,
                )?
            };
            self.constraint_evals += ls.constraint_evals;
            let beta = ls.beta;
            let resp = if beta == 1.0 { trial } else { self.evaluate(&ls.point)? };
            let delta_beta = predicted_decrease(&model, &d, beta);
            let rho_beta = acceptance_ratio(&model, resp.value, delta_beta, cfg.eta_gamma_plus, cfg.eta_gamma_minus);
            pending.beta = Some(beta);
            pending.delta_beta = Some(delta_beta);
            pending.rho_beta = Some(rho_beta);
            if rho_beta > 0.0 {
                let actual = objective - resp.value;
                self.audits.push(SeriousStepAudit {
                    iter,
                    phase: Phase::Normal,
                    weight: theta,
                    alpha,
                    beta,
                    d_norm_sq: d.norm_squared(),
                    lambda_term: if self.c.is_empty() {
                        0.0
                    } else {
                        sol.lambda.dot(&self.c)
                    },
                    c_l1_before: c_l1,
                    c_l1_after: ls.constraint_values.lp_norm(1),
                    objective_before: objective,
                    objective_after: resp.value,
                    delta_beta,
                    eta_gamma_plus: cfg.eta_gamma_plus,
                    eta_gamma_minus: cfg.eta_gamma_minus,
                    eta_beta: cfg.eta_beta,
                });
                self.accept(ls, resp)?;
                self.alpha = maybe_decrease_alpha(self.alpha, actual, delta_beta, &cfg.alpha_decrease);
                outcome = StepOutcome::Serious;
            }
        }
        if outcome == StepOutcome::Rejected {
            self.reject();
        }
        self.push_record(iter, Phase::Normal, alpha, pending, outcome, objective, c_l1, theta);
        Ok((Step::Continue, sol))
    }

    fn restoration_iteration(&mut self, iter: usize) -> Result<(Step, QpSolution), SolverError> {
        if self.c.is_empty() {
            return Err(SolverError::Precondition("restoration without constraints".into()));
        }
        self.restoration_iters += 1;
        let cfg = self.cfg;
        let alpha = self.alpha;
        let pi = self.params.pi.unwrap_or(self.params.theta).max(self.params.theta);
        self.params.pi = Some(pi);
        let objective = self.center.value;
        let c_l1 = self.c.lp_norm(1);

        let sub = self.subproblem().with_penalty(pi);
        let sol = solve_penalty(&sub, &self.qp)?;
        let d = sol.step.clone();
        let model = self.model();
        let delta = predicted_decrease(&model, &d, 1.0);
        let linearized_l1 = sub.linearized_residual(&d).lp_norm(1);
        let delta_pi = penalty_predicted_decrease(&model, &d, pi, c_l1, linearized_l1);
        let mut pending = Pending {
            step_norm: d.norm(),
            delta,
            delta_beta: None,
            rho: None,
            rho_beta: None,
            beta: None,
        };
        // Besides the documented test, a vanishing elastic step means x is
        // stationary for the ℓ₁-penalized problem and cannot leave restoration.
        if (delta_pi <= cfg.eps && linearized_l1 <= cfg.eps_c) || pending.step_norm <= cfg.eps {
            self.push_record(
                iter,
                Phase::Restoration,
                alpha,
                pending,
                StepOutcome::Terminated,
                objective,
                c_l1,
                pi,
            );
            let feasible = self.c.amax() <= cfg.kkt_report_tol();
            let status = if feasible {
                SolveStatus::ConvergedKkt
            } else {
                SolveStatus::RestorationConvergedInfeasible
            };
            return Ok((
                Step::Finished {
                    status,
                    sol: sol.clone(),
                    violation: Some(linearized_l1),
                },
                sol,
            ));
        }

        let pi_next = update_pi(pi, self.params.theta, sol.lambda_inf(), cfg.gamma_f);
        let (l_plus, l_minus, g_plus, g_minus) = if cfg.restoration_simplification {
            (1.0, 1.0, 1.0, 1.0)
        } else {
            (cfg.eta_l_plus, cfg.eta_l_minus, cfg.eta_gamma_plus, cfg.eta_gamma_minus)
        };
        let x_trial = self.trial_point(&d);
        let trial = self.evaluate(&x_trial)?;
        let rho = acceptance_ratio(&model, trial.value, delta, l_plus, l_minus);
        pending.rho = Some(rho);

        let mut outcome = StepOutcome::Rejected;
        if rho > 0.0 {
            let lambda_jd = sol.lambda.dot(&self.jac.tr_mul(&d));
            let spec = self.spec;
            let ls = search_restoration(
                &self.x,
                &d,
                lambda_jd,
                &self.c,
                pi,
                alpha,
                spec.lower(),
                spec.upper(),
                |p| spec.constraint_values(p),
                &self.ls,
            )?;
            self.constraint_evals += ls.constraint_evals;
            let beta = ls.beta;
            let resp = if beta == 1.0 { trial } else { self.evaluate(&ls.point)? };
            let delta_beta = predicted_decrease(&model, &d, beta);
            let rho_beta = acceptance_ratio(&model, resp.value, delta_beta, g_plus, g_minus);
            pending.beta = Some(beta);
            pending.delta_beta = Some(delta_beta);
            pending.rho_beta = Some(rho_beta);
            if rho_beta > 0.0 {
                let actual = objective - resp.value;
                self.audits.push(SeriousStepAudit {
                    iter,
                    phase: Phase::Restoration,
                    weight: pi,
                    alpha,
                    beta,
                    d_norm_sq: d.norm_squared(),
                    lambda_term: lambda_jd,
                    c_l1_before: c_l1,
                    c_l1_after: ls.constraint_values.lp_norm(1),
                    objective_before: objective,
                    objective_after: resp.value,
                    delta_beta,
                    eta_gamma_plus: 1.0,
                    eta_gamma_minus: 1.0,
                    eta_beta: cfg.eta_beta,
                });
                self.accept(ls, resp)?;
                self.alpha = maybe_decrease_alpha(self.alpha, actual, delta_beta, &cfg.alpha_decrease);
                outcome = StepOutcome::Serious;
            }
        }
        if outcome == StepOutcome::Rejected {
            self.reject();
        }
        self.params.pi = Some(pi_next);
        self.push_record(iter, Phase::Restoration, alpha, pending, outcome, objective, c_l1, pi);
        if outcome == StepOutcome::Serious {
            self.phase = Phase::Normal;
            self.after_restoration = true;
        }
        Ok((Step::Continue, sol))
    }

    fn report(
        &self,
        status: SolveStatus,
        sol: Option<&QpSolution>,
        violation: Option<f64>,
    ) -> Result<SolveReport, SolverError> {
        let kkt = match sol {
            Some(sol) => kkt_residuals(self.spec, &self.x, &self.center.subgradient, sol)?,
            None => KktResiduals {
                stationarity: f64::NAN,
                feasibility: if self.c.is_empty() { 0.0 } else { self.c.amax() },
                complementarity: f64::NAN,
            },
        };
        Ok(SolveReport {
            status,
            final_x: self.x.clone(),
            final_objective: self.center.value,
            kkt,
            final_step_norm: self.trace.last().map_or(f64::NAN, |r| r.step_norm),
            iterations: self.trace.len(),
            serious_steps: self.serious,
            rejected_steps: self.rejected,
            restoration_iterations: self.restoration_iters,
            oracle_calls: self.oracle_calls,
            constraint_evals: self.constraint_evals,
            final_alpha: self.alpha,
            final_theta: self.params.theta,
            final_pi: self.params.pi,
            restoration_violation: violation,
            trace: self.trace.clone(),
            audits: self.audits.clone(),
        })
    }
}
