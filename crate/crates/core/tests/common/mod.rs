//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the library's QP or projection code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sbundle::problems::Variant;
use sbundle::qp::QpSubproblem;

/// Exact minimizer of a strictly convex, box- and equality-constrained QP
/// `min gᵀd + ½dᵀMd  s.t. c + Jᵀd = 0, lo ≤ d ≤ hi` by enumerating which
/// coordinates sit at a bound. Returns `None` when no candidate is feasible.
pub fn enumerate_qp(sub: &QpSubproblem) -> Option<(DVector<f64>, f64)> {
    let n = sub.n();
    let m = sub.m();
    let h = sub.model_hessian();
    let mut best: Option<(DVector<f64>, f64)> = None;
    // Each coordinate: 0 free, 1 at lower, 2 at upper.
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        let mut d = DVector::zeros(n);
        for i in 0..n {
            match state[i] {
                1 => d[i] = sub.step_lower[i],
                2 => d[i] = sub.step_upper[i],
                _ => {}
            }
        }
        let nf = free.len();
        // Reduced KKT system in (d_free, λ).
        let size = nf + m;
        let mut kkt = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = h[(i, j)];
            }
            let mut r = -sub.gradient[i];
            for k in 0..n {
                if state[k] != 0 {
                    r -= h[(i, k)] * d[k];
                }
            }
            rhs[a] = r;
            for j in 0..m {
                kkt[(a, nf + j)] = sub.constraint_jacobian[(i, j)];
                kkt[(nf + j, a)] = sub.constraint_jacobian[(i, j)];
            }
        }
        for j in 0..m {
            let mut r = -sub.constraint_values[j];
            for k in 0..n {
                if state[k] != 0 {
                    r -= sub.constraint_jacobian[(k, j)] * d[k];
                }
            }
            rhs[nf + j] = r;
        }
        let sol = if size == 0 {
            Some(DVector::zeros(0))
        } else {
            // Pseudo-inverse handles dependent constraint columns; the
            // feasibility check below discards inconsistent candidates.
            kkt.clone().pseudo_inverse(1e-12).ok().map(|p| p * &rhs)
        };
        let Some(sol) = sol else { continue };
        for (a, &i) in free.iter().enumerate() {
            d[i] = sol[a];
        }
        let feasible = (0..n).all(|i| d[i] >= sub.step_lower[i] - 1e-10 && d[i] <= sub.step_upper[i] + 1e-10)
            && sub.linearized_residual(&d).amax() <= 1e-9;
        if !feasible {
            continue;
        }
        let obj = sub.objective(&d);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((d, obj));
        }
    }
    best
}

/// Exact minimizer of the elastic form `min gᵀd + ½dᵀMd + π‖c + Jᵀd‖₁` over
/// the step box: for each sign pattern of the linearized constraints the ℓ₁
/// term is linear or an equality, and the pattern whose minimizer is
/// sign-consistent with lowest objective is optimal.
pub fn enumerate_penalty_qp(sub: &QpSubproblem) -> (DVector<f64>, f64) {
    let pi = sub.penalty.expect("penalty form");
    let m = sub.m();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for code in 0..3usize.pow(m as u32) {
        let mut gradient = sub.gradient.clone();
        let mut signs = vec![0i8; m];
        let mut active = Vec::new();
        let mut c = code;
        for (j, s) in signs.iter_mut().enumerate() {
            *s = [0, 1, -1][c % 3];
            c /= 3;
            if *s == 0 {
                active.push(j);
            } else {
                gradient += pi * f64::from(*s) * sub.constraint_jacobian.column(j);
            }
        }
        let jac = DMatrix::from_fn(sub.n(), active.len(), |i, k| sub.constraint_jacobian[(i, active[k])]);
        let values = DVector::from_fn(active.len(), |k, _| sub.constraint_values[active[k]]);
        let reduced = QpSubproblem {
            gradient,
            constraint_values: values,
            constraint_jacobian: jac,
            penalty: None,
            ..sub.clone()
        };
        let Some((d, _)) = enumerate_qp(&reduced) else { continue };
        let r = sub.linearized_residual(&d);
        if (0..m).any(|j| f64::from(signs[j]) * r[j] < -1e-10) {
            continue;
        }
        let obj = sub.objective(&d);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((d, obj));
        }
    }
    best.expect("the elastic form is always feasible")
}

/// Random strictly convex subproblem whose linearized constraints may or may
/// not be consistent inside the step box.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpSubproblem {
    let mut sub = random_consistent_qp(rng, n, m);
    if m > 0 {
        sub.constraint_values = DVector::from_fn(m, |_, _| rng.gen_range(-8.0..8.0));
    }
    sub
}

/// Random strictly convex subproblem whose linearized constraints are
/// consistent inside the step box.
pub fn random_consistent_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpSubproblem {
    let alpha = rng.gen_range(0.1..5.0);
    let gradient = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let lower = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..-0.1));
    let upper = DVector::from_fn(n, |_, _| rng.gen_range(0.1..2.0));
    let mut sub = QpSubproblem::new(alpha, gradient, lower.clone(), upper.clone());
    if rng.gen_bool(0.3) {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        sub = sub.with_extra_hessian(Some(a.tr_mul(&a)));
    }
    if m > 0 {
        let jac = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0));
        let feasible = DVector::from_fn(n, |i, _| rng.gen_range(lower[i] * 0.9..upper[i] * 0.9));
        let values = -jac.tr_mul(&feasible);
        sub = sub.with_constraints(values, jac);
    }
    sub
}

/// Squared distance to `{y₂ ≤ y₃², box}` by a grid over `y₃` with golden-section
/// refinement around the best cells; for fixed `y₃` the optimal `(y₁, y₂)`
/// are clamps.
pub fn projection_grid_oracle(x: &[f64; 3], variant: Variant, points: usize) -> f64 {
    let [(l1, u1), (l2, u2), (l3, u3)] = variant.y_bounds();
    let y1 = x[0].clamp(l1, u1);
    let base = (x[0] - y1).powi(2);
    let along = |t: f64| {
        let cap = u2.min(t * t);
        if cap < l2 {
            return f64::INFINITY;
        }
        let y2 = x[1].clamp(l2, cap);
        (x[1] - y2).powi(2) + (x[2] - t).powi(2)
    };
    let h = (u3 - l3) / (points - 1) as f64;
    let mut vals: Vec<(f64, f64)> = (0..points)
        .map(|k| {
            let t = l3 + h * k as f64;
            (along(t), t)
        })
        .collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = vals[0].0;
    for &(_, t) in vals.iter().take(8) {
        let (mut a, mut b) = ((t - h).max(l3), (t + h).min(u3));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if along(c) <= along(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best = best.min(along(0.5 * (a + b))).min(along(a)).min(along(b));
    }
    base + best
}
