//! Convex QP subproblems solved by a primal-dual interior-point method.
//!
//! Two subproblems share one solver:
//!
//! ```text
//! standard:  min  gᵀd + ½dᵀMd          s.t.  c + ∇cᵀd = 0,           d_l ≤ d ≤ d_u
//! penalty:   min  gᵀd + ½dᵀMd + π·Σ(v+w) s.t. c + ∇cᵀd = v − w,  d_l ≤ d ≤ d_u,  v, w ≥ 0
//! ```
//!
//! with `M = αI + H` where `H` is the (optional) exact curvature of the smooth
//! part of the objective. Both are mapped onto the generic form
//! `min ½zᵀQz + qᵀz  s.t.  Ez = f,  lo ≤ z ≤ hi` and solved with a Mehrotra
//! predictor-corrector iteration, followed by an active-set polish that
//! recovers multipliers to working precision.
//!
//! Multiplier signs follow the two stationarity conditions literally:
//! `g + Md − ∇cλ − ζ_l + ζ_u = 0` for the standard form and
//! `g + Md + ∇cλ − ζ_l + ζ_u = 0`, `π − λ − p = 0`, `π + λ − q = 0` for the
//! penalty form.

use nalgebra::{DMatrix, DVector};

use crate::error::QpError;

/// Tolerances for the QP layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    /// Target KKT residual (max norm, relative to the data scale).
    pub qp_tol: f64,
    /// Minimal linearized ℓ₁ violation above which a linearization counts as inconsistent.
    pub feas_tol: f64,
    /// Threshold on `|c_j + ∇c_jᵀd|` separating the active set from the inactive set.
    pub active_tol: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            qp_tol: 1e-9,
            feas_tol: 1e-8,
            active_tol: 1e-7,
            max_iter: 200,
        }
    }
}

/// Data of one linearized subproblem around the current serious point.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSubproblem {
    pub alpha: f64,
    pub gradient: DVector<f64>,
    pub constraint_values: DVector<f64>,
    /// n×m, one column per constraint.
    pub constraint_jacobian: DMatrix<f64>,
    pub step_lower: DVector<f64>,
    pub step_upper: DVector<f64>,
    /// Present for the elastic penalty form.
    pub penalty: Option<f64>,
    /// Exact curvature of a smooth objective part, added to `αI`.
    pub extra_hessian: Option<DMatrix<f64>>,
}

impl QpSubproblem {
    /// Box-only subproblem (m = 0).
    pub fn new(alpha: f64, gradient: DVector<f64>, step_lower: DVector<f64>, step_upper: DVector<f64>) -> Self {
        let n = gradient.len();
        Self {
            alpha,
            gradient,
            constraint_values: DVector::zeros(0),
            constraint_jacobian: DMatrix::zeros(n, 0),
            step_lower,
            step_upper,
            penalty: None,
            extra_hessian: None,
        }
    }

    pub fn with_constraints(mut self, values: DVector<f64>, jacobian: DMatrix<f64>) -> Self {
        self.constraint_values = values;
        self.constraint_jacobian = jacobian;
        self
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = Some(penalty);
        self
    }

    pub fn with_extra_hessian(mut self, hessian: Option<DMatrix<f64>>) -> Self {
        self.extra_hessian = hessian;
        self
    }

    pub fn n(&self) -> usize {
        self.gradient.len()
    }

    pub fn m(&self) -> usize {
        self.constraint_values.len()
    }

    /// `M = αI + H`.
    pub fn model_hessian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut h = DMatrix::identity(n, n) * self.alpha;
        if let Some(extra) = &self.extra_hessian {
            h += extra;
        }
        h
    }

    /// `c + ∇cᵀd`.
    pub fn linearized_residual(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.constraint_values + self.constraint_jacobian.tr_mul(d)
    }

    /// Objective of the subproblem at `d` (slacks eliminated for the penalty form).
    pub fn objective(&self, d: &DVector<f64>) -> f64 {
        let quad = self.gradient.dot(d) + 0.5 * d.dot(&(self.model_hessian() * d));
        match self.penalty {
            Some(pi) => quad + pi * self.linearized_residual(d).lp_norm(1),
            None => quad,
        }
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let bad = |msg: String| Err(QpError::InvalidSubproblem(msg));
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.step_lower.len() != n || self.step_upper.len() != n {
            return bad("step bounds have the wrong length".into());
        }
        if self.constraint_jacobian.nrows() != n || self.constraint_jacobian.ncols() != self.m() {
            return bad("jacobian must be n x m".into());
        }
        for i in 0..n {
            if !(self.step_lower[i] <= self.step_upper[i]) {
                return bad(format!("empty step box in coordinate {i}"));
            }
        }
        if let Some(pi) = self.penalty {
            if !(pi > 0.0) || !pi.is_finite() {
                return bad(format!("penalty must be positive, got {pi}"));
            }
        }
        let finite = self
            .gradient
            .iter()
            .chain(self.constraint_values.iter())
            .chain(self.constraint_jacobian.iter())
            .chain(self.step_lower.iter())
            .chain(self.step_upper.iter())
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite subproblem data".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    /// The linearized constraints admit no step inside the box.
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpForm {
    Standard,
    Penalty,
}

/// Step and multipliers of a solved subproblem.
///
/// Slack vectors and their multipliers are empty for the standard form.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub step: DVector<f64>,
    pub lambda: DVector<f64>,
    pub zeta_lower: DVector<f64>,
    pub zeta_upper: DVector<f64>,
    pub slack_v: DVector<f64>,
    pub slack_w: DVector<f64>,
    pub slack_mult_p: DVector<f64>,
    pub slack_mult_q: DVector<f64>,
    pub kkt_residual: f64,
    pub status: QpStatus,
    pub form: QpForm,
    pub iterations: usize,
}

impl QpSolution {
    pub fn lambda_inf(&self) -> f64 {
        self.lambda.amax()
    }

    /// Multipliers in the standard-form convention (`−∇cλ` in stationarity).
    pub fn lambda_standard(&self) -> DVector<f64> {
        match self.form {
            QpForm::Standard => self.lambda.clone(),
            QpForm::Penalty => -&self.lambda,
        }
    }
}

/// Max-norm KKT residual of a solution, evaluated directly from the optimality
/// conditions of its form (stationarity, feasibility, complementarity, signs).
pub fn kkt_residual(sub: &QpSubproblem, sol: &QpSolution) -> f64 {
    let d = &sol.step;
    let hd = sub.model_hessian() * d;
    let jl = &sub.constraint_jacobian * &sol.lambda;
    let stat = match sol.form {
        QpForm::Standard => &sub.gradient + &hd - &jl - &sol.zeta_lower + &sol.zeta_upper,
        QpForm::Penalty => &sub.gradient + &hd + &jl - &sol.zeta_lower + &sol.zeta_upper,
    };
    let mut res = stat.amax();
    let lin = sub.linearized_residual(d);
    for i in 0..sub.n() {
        let (lo, hi) = (sub.step_lower[i], sub.step_upper[i]);
        res = res
            .max((sol.zeta_lower[i] * (d[i] - lo)).abs())
            .max((sol.zeta_upper[i] * (hi - d[i])).abs())
            .max(lo - d[i])
            .max(d[i] - hi)
            .max(-sol.zeta_lower[i])
            .max(-sol.zeta_upper[i]);
    }
    match sol.form {
        QpForm::Standard => res.max(lin.amax()),
        QpForm::Penalty => {
            let pi = sub.penalty.unwrap_or(0.0);
            for j in 0..sub.m() {
                let (v, w) = (sol.slack_v[j], sol.slack_w[j]);
                let (p, q) = (sol.slack_mult_p[j], sol.slack_mult_q[j]);
                res = res
                    .max((lin[j] - v + w).abs())
                    .max((pi - sol.lambda[j] - p).abs())
                    .max((pi + sol.lambda[j] - q).abs())
                    .max((p * v).abs())
                    .max((q * w).abs())
                    .max(-v)
                    .max(-w)
                    .max(-p)
                    .max(-q);
            }
            res
        }
    }
}

/// Solve the linearized subproblem. Returns `Inconsistent` (with the phase-1
/// step) when no step in the box satisfies the linearized constraints.
pub fn solve_standard(sub: &QpSubproblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    sub.validate()?;
    if sub.penalty.is_some() {
        return Err(QpError::InvalidSubproblem(
            "standard solve called with a penalty".into(),
        ));
    }
    let (n, m) = (sub.n(), sub.m());
    if m > 0 {
        let (violation, phase1) = min_linearized_violation(sub, settings)?;
        if violation > settings.feas_tol {
            return Ok(QpSolution {
                step: phase1.step,
                lambda: DVector::zeros(m),
                zeta_lower: DVector::zeros(n),
                zeta_upper: DVector::zeros(n),
                slack_v: DVector::zeros(0),
                slack_w: DVector::zeros(0),
                slack_mult_p: DVector::zeros(0),
                slack_mult_q: DVector::zeros(0),
                kkt_residual: f64::NAN,
                status: QpStatus::Inconsistent,
                form: QpForm::Standard,
                iterations: phase1.iterations,
            });
        }
    }

    let qp = GenericQp {
        hessian: sub.model_hessian(),
        linear: sub.gradient.clone(),
        eq_matrix: sub.constraint_jacobian.transpose(),
        eq_rhs: -&sub.constraint_values,
        lower: sub.step_lower.clone(),
        upper: sub.step_upper.clone(),
    };
    let point = qp.solve(&DVector::zeros(n), settings)?;
    let mut sol = QpSolution {
        step: point.z.clone(),
        lambda: point.y.clone(),
        zeta_lower: point.z_lower.clone(),
        zeta_upper: point.z_upper.clone(),
        slack_v: DVector::zeros(0),
        slack_w: DVector::zeros(0),
        slack_mult_p: DVector::zeros(0),
        slack_mult_q: DVector::zeros(0),
        kkt_residual: 0.0,
        status: QpStatus::Optimal,
        form: QpForm::Standard,
        iterations: point.iterations,
    };
    sol.kkt_residual = kkt_residual(sub, &sol);
    Ok(sol)
}

/// Solve the elastic penalty subproblem. Always feasible.
pub fn solve_penalty(sub: &QpSubproblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    sub.validate()?;
    let pi = sub
        .penalty
        .ok_or_else(|| QpError::InvalidSubproblem("penalty solve called without a penalty".into()))?;
    let (n, m) = (sub.n(), sub.m());
    let nz = n + 2 * m;

    let mut hessian = DMatrix::zeros(nz, nz);
    hessian.view_mut((0, 0), (n, n)).copy_from(&sub.model_hessian());
    let mut linear = DVector::from_element(nz, pi);
    linear.rows_mut(0, n).copy_from(&sub.gradient);
    let mut eq_matrix = DMatrix::zeros(m, nz);
    eq_matrix
        .view_mut((0, 0), (m, n))
        .copy_from(&sub.constraint_jacobian.transpose());
    for j in 0..m {
        eq_matrix[(j, n + j)] = -1.0;
        eq_matrix[(j, n + m + j)] = 1.0;
    }
    let mut lower = DVector::zeros(nz);
    lower.rows_mut(0, n).copy_from(&sub.step_lower);
    let mut upper = DVector::from_element(nz, f64::INFINITY);
    upper.rows_mut(0, n).copy_from(&sub.step_upper);

    let mut z0 = DVector::zeros(nz);
    for j in 0..m {
        let s = sub.constraint_values[j].abs().max(1.0);
        z0[n + j] = s;
        z0[n + m + j] = s;
    }

    let qp = GenericQp {
        hessian,
        linear,
        eq_matrix,
        eq_rhs: -&sub.constraint_values,
        lower,
        upper,
    };
    let point = qp.solve(&z0, settings)?;
    let mut sol = QpSolution {
        step: point.z.rows(0, n).into_owned(),
        // Generic multipliers enter as −Eᵀy; the penalty form writes +∇cλ.
        lambda: -&point.y,
        zeta_lower: point.z_lower.rows(0, n).into_owned(),
        zeta_upper: point.z_upper.rows(0, n).into_owned(),
        slack_v: point.z.rows(n, m).into_owned(),
        slack_w: point.z.rows(n + m, m).into_owned(),
        slack_mult_p: point.z_lower.rows(n, m).into_owned(),
        slack_mult_q: point.z_lower.rows(n + m, m).into_owned(),
        kkt_residual: 0.0,
        status: QpStatus::Optimal,
        form: QpForm::Penalty,
        iterations: point.iterations,
    };
    sol.kkt_residual = kkt_residual(sub, &sol);
    Ok(sol)
}

/// Minimal ℓ₁ violation `min ‖c + ∇cᵀd‖₁` over the step box, from a phase-1
/// elastic solve with a vanishing proximal term.
///
/// The proximal coefficient is chosen so that the reported violation exceeds
/// the true minimum by at most `0.05·feas_tol`.
pub fn min_linearized_violation(sub: &QpSubproblem, settings: &QpSettings) -> Result<(f64, QpSolution), QpError> {
    let n = sub.n();
    let radius_sq: f64 = (0..n)
        .map(|i| sub.step_lower[i].abs().max(sub.step_upper[i].abs()).powi(2))
        .sum();
    let alpha = (0.1 * settings.feas_tol / radius_sq.max(1.0)).min(sub.alpha);
    let phase1 = QpSubproblem {
        alpha,
        gradient: DVector::zeros(n),
        constraint_values: sub.constraint_values.clone(),
        constraint_jacobian: sub.constraint_jacobian.clone(),
        step_lower: sub.step_lower.clone(),
        step_upper: sub.step_upper.clone(),
        penalty: Some(1.0),
        extra_hessian: None,
    };
    let sol = solve_penalty(&phase1, settings)?;
    let violation = phase1.linearized_residual(&sol.step).lp_norm(1);
    Ok((violation, sol))
}

/// True iff the linearized constraints have no solution in the step box
/// (minimal ℓ₁ violation above `feas_tol`).
pub fn detect_inconsistency(sub: &QpSubproblem, feas_tol: f64) -> Result<bool, QpError> {
    if sub.m() == 0 {
        return Ok(false);
    }
    sub.validate()?;
    let settings = QpSettings {
        feas_tol,
        ..QpSettings::default()
    };
    let (violation, _) = min_linearized_violation(sub, &settings)?;
    Ok(violation > feas_tol)
}

/// Sign pattern and active/inactive split of an elastic solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PenaltyClassification {
    /// σ_j ∈ {−1, 0, 1}: sign of `c_j + ∇c_jᵀd` (0 within `active_tol`).
    pub signs: Vec<i8>,
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
}

pub fn classify_penalty_solution(sub: &QpSubproblem, sol: &QpSolution, active_tol: f64) -> PenaltyClassification {
    let residual = sub.linearized_residual(&sol.step);
    let mut out = PenaltyClassification {
        signs: Vec::with_capacity(sub.m()),
        active: Vec::new(),
        inactive: Vec::new(),
    };
    for (j, &r) in residual.iter().enumerate() {
        if r.abs() <= active_tol {
            out.signs.push(0);
            out.active.push(j);
        } else {
            out.signs.push(if r > 0.0 { 1 } else { -1 });
            out.inactive.push(j);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Generic bound- and equality-constrained convex QP.

struct GenericQp {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    /// p×N
    eq_matrix: DMatrix<f64>,
    eq_rhs: DVector<f64>,
    lower: DVector<f64>,
    /// May contain +∞.
    upper: DVector<f64>,
}

#[derive(Debug, Clone)]
struct KktPoint {
    z: DVector<f64>,
    y: DVector<f64>,
    z_lower: DVector<f64>,
    z_upper: DVector<f64>,
    iterations: usize,
}

const STEP_FRACTION: f64 = 0.995;
const IPM_TOL: f64 = 1e-11;

impl GenericQp {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn scale(&self) -> f64 {
        1.0 + self
            .hessian
            .amax()
            .max(self.linear.amax())
            .max(if self.eq_rhs.is_empty() {
                0.0
            } else {
                self.eq_rhs.amax()
            })
            .max(if self.eq_matrix.is_empty() {
                0.0
            } else {
                self.eq_matrix.amax()
            })
    }

    /// Max-norm residual over stationarity, feasibility, complementarity and sign conditions.
    fn residual(&self, pt: &KktPoint) -> f64 {
        let rd = &self.hessian * &pt.z + &self.linear - self.eq_matrix.tr_mul(&pt.y) - &pt.z_lower + &pt.z_upper;
        let rp = &self.eq_matrix * &pt.z - &self.eq_rhs;
        let mut res = rd.amax();
        if !rp.is_empty() {
            res = res.max(rp.amax());
        }
        for i in 0..self.dim() {
            let (lo, hi, z) = (self.lower[i], self.upper[i], pt.z[i]);
            res = res
                .max(lo - z)
                .max(z - hi)
                .max(-pt.z_lower[i])
                .max(-pt.z_upper[i])
                .max((pt.z_lower[i] * (z - lo)).abs());
            if hi.is_finite() {
                res = res.max((pt.z_upper[i] * (hi - z)).abs());
            }
        }
        res
    }

    fn solve(&self, z0: &DVector<f64>, settings: &QpSettings) -> Result<KktPoint, QpError> {
        let nn = self.dim();
        let fixed: Vec<bool> = (0..nn)
            .map(|i| self.upper[i] - self.lower[i] <= 1e-14 * (1.0 + self.lower[i].abs()))
            .collect();
        if fixed.iter().any(|&f| f) {
            return self.solve_with_fixed(&fixed, z0, settings);
        }
        let ipm = self.interior_point(z0, settings)?;
        let scale = self.scale();
        let mut best = ipm.clone();
        let mut best_res = self.residual(&ipm);
        if let Some(polished) = self.polish(&ipm) {
            let r = self.residual(&polished);
            if r <= best_res {
                best = polished;
                best_res = r;
            }
        }
        if best_res > settings.qp_tol * scale {
            return Err(QpError::NumericalFailure {
                iterations: ipm.iterations,
                residual: best_res,
            });
        }
        Ok(best)
    }

    /// Eliminate coordinates with `lo = hi`, solve the reduced problem, and
    /// recover the bound multipliers of the frozen coordinates from stationarity.
    fn solve_with_fixed(&self, fixed: &[bool], z0: &DVector<f64>, settings: &QpSettings) -> Result<KktPoint, QpError> {
        let nn = self.dim();
        let free: Vec<usize> = (0..nn).filter(|&i| !fixed[i]).collect();
        let frozen: Vec<usize> = (0..nn).filter(|&i| fixed[i]).collect();
        let mut z = DVector::zeros(nn);
        for &i in &frozen {
            z[i] = self.lower[i];
        }
        let p = self.eq_rhs.len();
        let mut y = DVector::zeros(p);
        let mut z_lower = DVector::zeros(nn);
        let mut z_upper = DVector::zeros(nn);
        let mut iterations = 0;

        if !free.is_empty() {
            let nf = free.len();
            let hessian = DMatrix::from_fn(nf, nf, |a, b| self.hessian[(free[a], free[b])]);
            let eq_matrix = DMatrix::from_fn(p, nf, |r, b| self.eq_matrix[(r, free[b])]);
            let mut linear = DVector::from_fn(nf, |a, _| self.linear[free[a]]);
            let mut eq_rhs = self.eq_rhs.clone();
            for &i in &frozen {
                for a in 0..nf {
                    linear[a] += self.hessian[(free[a], i)] * z[i];
                }
                for r in 0..p {
                    eq_rhs[r] -= self.eq_matrix[(r, i)] * z[i];
                }
            }
            let reduced = GenericQp {
                hessian,
                linear,
                eq_matrix,
                eq_rhs,
                lower: DVector::from_fn(nf, |a, _| self.lower[free[a]]),
                upper: DVector::from_fn(nf, |a, _| self.upper[free[a]]),
            };
            let z0r = DVector::from_fn(nf, |a, _| z0[free[a]]);
            let pt = reduced.solve(&z0r, settings)?;
            for (a, &i) in free.iter().enumerate() {
                z[i] = pt.z[a];
                z_lower[i] = pt.z_lower[a];
                z_upper[i] = pt.z_upper[a];
            }
            y = pt.y;
            iterations = pt.iterations;
        }
        let stat = &self.hessian * &z + &self.linear - self.eq_matrix.tr_mul(&y);
        for &i in &frozen {
            if stat[i] >= 0.0 {
                z_lower[i] = stat[i];
            } else {
                z_upper[i] = -stat[i];
            }
        }
        let pt = KktPoint {
            z,
            y,
            z_lower,
            z_upper,
            iterations,
        };
        let res = self.residual(&pt);
        if res > settings.qp_tol * self.scale() {
            return Err(QpError::NumericalFailure {
                iterations,
                residual: res,
            });
        }
        Ok(pt)
    }

    fn interior_point(&self, z0: &DVector<f64>, settings: &QpSettings) -> Result<KktPoint, QpError> {
        let nn = self.dim();
        let p = self.eq_rhs.len();
        let has_hi: Vec<bool> = self.upper.iter().map(|u| u.is_finite()).collect();
        let scale = self.scale();
        let tol = IPM_TOL * scale;

        let mut z = DVector::from_fn(nn, |i, _| {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            let push = (0.01 * (hi - lo)).min(0.1);
            let v = z0[i].max(lo + push);
            if has_hi[i] {
                v.min(hi - push)
            } else {
                v
            }
        });
        let mut y = DVector::zeros(p);
        let mut zl = DVector::from_element(nn, 1.0);
        let mut zu = DVector::from_fn(nn, |i, _| if has_hi[i] { 1.0 } else { 0.0 });
        let n_bounds = nn + has_hi.iter().filter(|&&h| h).count();
        let reg = 1e-14 * scale;

        let mut best: Option<(f64, KktPoint)> = None;
        for iter in 0..settings.max_iter {
            let sl = &z - &self.lower;
            let su = DVector::from_fn(nn, |i, _| if has_hi[i] { self.upper[i] - z[i] } else { 1.0 });
            let rd = &self.hessian * &z + &self.linear - self.eq_matrix.tr_mul(&y) - &zl + &zu;
            let rp = &self.eq_matrix * &z - &self.eq_rhs;
            let mut comp_sum = 0.0;
            let mut comp_max: f64 = 0.0;
            for i in 0..nn {
                comp_sum += sl[i] * zl[i];
                comp_max = comp_max.max(sl[i] * zl[i]);
                if has_hi[i] {
                    comp_sum += su[i] * zu[i];
                    comp_max = comp_max.max(su[i] * zu[i]);
                }
            }
            let mu = comp_sum / n_bounds as f64;
            let rp_inf = if p > 0 { rp.amax() } else { 0.0 };
            let res = rd.amax().max(rp_inf).max(comp_max);
            let current = KktPoint {
                z: z.clone(),
                y: y.clone(),
                z_lower: zl.clone(),
                z_upper: zu.clone(),
                iterations: iter,
            };
            if best.as_ref().is_none_or(|(r, _)| res < *r) {
                best = Some((res, current));
            }
            if res <= tol {
                break;
            }

            // Reduced Newton matrix [[Q + D, −Eᵀ], [E, reg·I]].
            let mut kkt = DMatrix::zeros(nn + p, nn + p);
            kkt.view_mut((0, 0), (nn, nn)).copy_from(&self.hessian);
            for i in 0..nn {
                let mut d = zl[i] / sl[i];
                if has_hi[i] {
                    d += zu[i] / su[i];
                }
                kkt[(i, i)] += d;
            }
            kkt.view_mut((0, nn), (nn, p)).copy_from(&(-self.eq_matrix.transpose()));
            kkt.view_mut((nn, 0), (p, nn)).copy_from(&self.eq_matrix);
            for r in 0..p {
                kkt[(nn + r, nn + r)] = reg;
            }
            let lu = kkt.lu();

            let newton = |rc_l: &DVector<f64>,
                          rc_u: &DVector<f64>|
             -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
                let mut rhs = DVector::zeros(nn + p);
                for i in 0..nn {
                    let mut v = -rd[i] - rc_l[i] / sl[i];
                    if has_hi[i] {
                        v += rc_u[i] / su[i];
                    }
                    rhs[i] = v;
                }
                for r in 0..p {
                    rhs[nn + r] = -rp[r];
                }
                let sol = lu.solve(&rhs)?;
                if sol.iter().any(|v| !v.is_finite()) {
                    return None;
                }
                let dz = sol.rows(0, nn).into_owned();
                let dy = sol.rows(nn, p).into_owned();
                let dzl = DVector::from_fn(nn, |i, _| (-rc_l[i] - zl[i] * dz[i]) / sl[i]);
                let dzu = DVector::from_fn(nn, |i, _| {
                    if has_hi[i] {
                        (-rc_u[i] + zu[i] * dz[i]) / su[i]
                    } else {
                        0.0
                    }
                });
                Some((dz, dy, dzl, dzu))
            };

            let primal_step = |dz: &DVector<f64>| -> f64 {
                let mut a: f64 = 1.0;
                for i in 0..nn {
                    if dz[i] < 0.0 {
                        a = a.min(-sl[i] / dz[i]);
                    }
                    if has_hi[i] && dz[i] > 0.0 {
                        a = a.min(su[i] / dz[i]);
                    }
                }
                a
            };
            let dual_step = |dzl: &DVector<f64>, dzu: &DVector<f64>| -> f64 {
                let mut a: f64 = 1.0;
                for i in 0..nn {
                    if dzl[i] < 0.0 {
                        a = a.min(-zl[i] / dzl[i]);
                    }
                    if has_hi[i] && dzu[i] < 0.0 {
                        a = a.min(-zu[i] / dzu[i]);
                    }
                }
                a
            };

            // Predictor.
            let rc_l = sl.component_mul(&zl);
            let rc_u = DVector::from_fn(nn, |i, _| if has_hi[i] { su[i] * zu[i] } else { 0.0 });
            let Some((dz_a, _, dzl_a, dzu_a)) = newton(&rc_l, &rc_u) else {
                break;
            };
            let (ap_aff, ad_aff) = (primal_step(&dz_a), dual_step(&dzl_a, &dzu_a));
            let mut mu_aff = 0.0;
            for i in 0..nn {
                mu_aff += (sl[i] + ap_aff * dz_a[i]) * (zl[i] + ad_aff * dzl_a[i]);
                if has_hi[i] {
                    mu_aff += (su[i] - ap_aff * dz_a[i]) * (zu[i] + ad_aff * dzu_a[i]);
                }
            }
            mu_aff /= n_bounds as f64;
            let sigma = if mu > 0.0 {
                (mu_aff / mu).clamp(0.0, 1.0).powi(3)
            } else {
                0.0
            };

            // Corrector.
            let rc_l = DVector::from_fn(nn, |i, _| sl[i] * zl[i] + dz_a[i] * dzl_a[i] - sigma * mu);
            let rc_u = DVector::from_fn(nn, |i, _| {
                if has_hi[i] {
                    su[i] * zu[i] - dz_a[i] * dzu_a[i] - sigma * mu
                } else {
                    0.0
                }
            });
            let Some((dz, dy, dzl, dzu)) = newton(&rc_l, &rc_u) else {
                break;
            };
            let ap = (STEP_FRACTION * primal_step(&dz)).min(1.0);
            let ad = (STEP_FRACTION * dual_step(&dzl, &dzu)).min(1.0);
            z += ap * dz;
            y += ad * dy;
            zl += ad * dzl;
            zu += ad * dzu;
            for i in 0..nn {
                // keep strictly interior against rounding
                let lo = self.lower[i];
                if z[i] <= lo {
                    z[i] = lo + f64::EPSILON * (1.0 + lo.abs());
                }
                if has_hi[i] && z[i] >= self.upper[i] {
                    let hi = self.upper[i];
                    z[i] = hi - f64::EPSILON * (1.0 + hi.abs());
                }
                zl[i] = zl[i].max(f64::MIN_POSITIVE);
                if has_hi[i] {
                    zu[i] = zu[i].max(f64::MIN_POSITIVE);
                }
            }
        }
        let (res, mut pt) = best.expect("at least one iterate");
        if !res.is_finite() {
            return Err(QpError::NumericalFailure {
                iterations: pt.iterations,
                residual: res,
            });
        }
        pt.iterations = pt.iterations.max(1);
        Ok(pt)
    }

    /// Fix the bounds the interior-point iterate identifies as active and solve
    /// the resulting equality-constrained KKT system exactly.
    fn polish(&self, pt: &KktPoint) -> Option<KktPoint> {
        let nn = self.dim();
        let p = self.eq_rhs.len();
        // 0: free, 1: at lower, 2: at upper
        let state: Vec<u8> = (0..nn)
            .map(|i| {
                let sl = pt.z[i] - self.lower[i];
                let su = self.upper[i] - pt.z[i];
                if sl < pt.z_lower[i] {
                    1
                } else if self.upper[i].is_finite() && su < pt.z_upper[i] {
                    2
                } else {
                    0
                }
            })
            .collect();
        let free: Vec<usize> = (0..nn).filter(|&i| state[i] == 0).collect();
        let mut z = DVector::from_fn(nn, |i, _| match state[i] {
            1 => self.lower[i],
            2 => self.upper[i],
            _ => 0.0,
        });
        let nf = free.len();
        let dim = nf + p;
        let mut y = DVector::zeros(p);
        if dim > 0 {
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            for (a, &i) in free.iter().enumerate() {
                for (b, &k) in free.iter().enumerate() {
                    kkt[(a, b)] = self.hessian[(i, k)];
                }
                for r in 0..p {
                    kkt[(a, nf + r)] = -self.eq_matrix[(r, i)];
                    kkt[(nf + r, a)] = self.eq_matrix[(r, i)];
                }
                let mut v = -self.linear[i];
                for k in 0..nn {
                    if state[k] != 0 {
                        v -= self.hessian[(i, k)] * z[k];
                    }
                }
                rhs[a] = v;
            }
            for r in 0..p {
                let mut v = self.eq_rhs[r];
                for k in 0..nn {
                    if state[k] != 0 {
                        v -= self.eq_matrix[(r, k)] * z[k];
                    }
                }
                rhs[nf + r] = v;
            }
            let sol = kkt.lu().solve(&rhs)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            for (a, &i) in free.iter().enumerate() {
                z[i] = sol[a];
            }
            y = sol.rows(nf, p).into_owned();
        }
        let stat = &self.hessian * &z + &self.linear - self.eq_matrix.tr_mul(&y);
        let mut z_lower = DVector::zeros(nn);
        let mut z_upper = DVector::zeros(nn);
        for i in 0..nn {
            match state[i] {
                1 => z_lower[i] = stat[i],
                2 => z_upper[i] = -stat[i],
                _ => {}
            }
        }
        Some(KktPoint {
            z,
            y,
            z_lower,
            z_upper,
            iterations: pt.iterations,
        })
    }
}
