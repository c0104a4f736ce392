//! Brute-force reference solutions for the small built-in instances.

use nalgebra::{DMatrix, DVector};

use super::catalog::{example_box, MU};
use super::projection::Variant;

/// Minimize a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    let mut best = (lo, f(lo));
    for t in [a, b, hi] {
        let ft = f(t);
        if ft < best.1 {
            best = (t, ft);
        }
    }
    best
}

/// Minimize over `t ∈ [lo, hi]` by a uniform grid followed by golden-section
/// refinement around the best grid point.
pub fn grid_then_refine<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize, tol: f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let h = (hi - lo) / (points - 1) as f64;
    let (mut bi, mut bv) = (0, f64::INFINITY);
    for i in 0..points {
        let val = f(lo + h * i as f64);
        if val < bv {
            bi = i;
            bv = val;
        }
    }
    let a = (lo + h * (bi as f64 - 1.0)).max(lo);
    let b = (lo + h * (bi as f64 + 1.0)).min(hi);
    let refined = golden_section(&f, a, b, tol);
    if refined.1 <= bv {
        refined
    } else {
        (lo + h * bi as f64, bv)
    }
}

/// `min_x μ(x − p)² + (x − q)²` over `x ∈ [lo, hi]`, returning `(x, value)`.
fn coupled_min(weight: f64, p: f64, q: f64, lo: f64, hi: f64) -> (f64, f64) {
    let x = ((weight * p + q) / (weight + 1.0)).clamp(lo, hi);
    (x, weight * (x - p).powi(2) + (x - q).powi(2))
}

/// Optimal value of the extensive form of an example for a fixed second-stage
/// point `y`, with the first-stage point minimized coordinate-wise in closed form.
fn extensive_value(y: [f64; 3], lower: &DVector<f64>, upper: &DVector<f64>) -> (DVector<f64>, f64) {
    let (x1, v1) = coupled_min(1.0, 0.0, y[0], lower[0], upper[0]);
    let (x2, v2) = coupled_min(MU, 0.5, y[1], lower[1], upper[1]);
    let (x3, v3) = coupled_min(MU, 0.0, y[2], lower[2], upper[2]);
    (DVector::from_column_slice(&[x1, x2, x3]), v1 + v2 + v3)
}

/// Reference optimum of an example, found by treating both stages as one
/// problem: grid over `y₃`, golden-section search over `y₂` and `y₁` (both
/// convex once `y₃` is fixed), then refinement around the best `y₃`.
///
/// Returns `(x*, value*)`.
pub fn reference_solution(variant: Variant, grid_resolution: usize) -> (DVector<f64>, f64) {
    let (lower, upper) = example_box(variant);
    let [(l1, u1), (l2, u2), (l3, u3)] = variant.y_bounds();
    let tol = 1e-12;
    let inner = |y3: f64| -> ([f64; 3], f64) {
        let hi2 = u2.min(y3 * y3);
        let (y1, _) = golden_section(|y1| extensive_value([y1, 0.0, y3], &lower, &upper).1, l1, u1, tol);
        let (y2, val) = golden_section(|y2| extensive_value([y1, y2, y3], &lower, &upper).1, l2, hi2, tol);
        ([y1, y2, y3], val)
    };
    let (y3, _) = grid_then_refine(|t| inner(t).1, l3, u3, grid_resolution.max(3), tol);
    let (y, _) = inner(y3);
    extensive_value(y, &lower, &upper)
}

/// Closed-form solution of `min ½‖x − a‖²  s.t.  Aᵀx = b` (bounds inactive),
/// from the KKT system `[[I, A], [Aᵀ, 0]]`.
pub fn equality_qp_solution(target: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let (n, m) = (a.nrows(), a.ncols());
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).fill_with_identity();
    kkt.view_mut((0, n), (n, m)).copy_from(a);
    kkt.view_mut((n, 0), (m, n)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(target);
    rhs.rows_mut(n, m).copy_from(b);
    kkt.lu().solve(&rhs).map(|s| s.rows(0, n).into_owned())
}

/// Minimal `‖c + Jᵀd‖₁` over the step box `[lo, hi]` for `n = 2`, by a grid
/// over `d₁` with golden-section search over `d₂` and refinement.
pub fn min_l1_violation_2d(
    c: &DVector<f64>,
    jac: &DMatrix<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    points: usize,
) -> f64 {
    assert_eq!(jac.nrows(), 2, "two-dimensional steps only");
    let viol = |d1: f64, d2: f64| -> f64 {
        (0..c.len())
            .map(|j| (c[j] + jac[(0, j)] * d1 + jac[(1, j)] * d2).abs())
            .sum()
    };
    let inner = |d1: f64| golden_section(|d2| viol(d1, d2), lo[1], hi[1], 1e-12).1;
    grid_then_refine(inner, lo[0], hi[0], points, 1e-12).1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        let (t, v) = golden_section(|t| (t - 0.3).powi(2) + 1.0, -2.0, 2.0, 1e-12);
        assert!((t - 0.3).abs() < 1e-6 && (v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn example_reference_matches_the_analytic_pattern() {
        for variant in [Variant::Ex1, Variant::Ex2] {
            let (x, v) = reference_solution(variant, 401);
            let expected = 0.25 * MU / (MU + 1.0);
            assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
            assert!(x[0].abs() < 1e-6 && (x[1] - 0.5 * MU / (MU + 1.0)).abs() < 1e-6 && x[2].abs() < 1e-6);
            let (_, v2) = reference_solution(variant, 801);
            assert!((v - v2).abs() < 1e-6);
        }
    }

    #[test]
    fn equality_qp_closed_form() {
        let x = equality_qp_solution(
            &DVector::from_column_slice(&[2.0, 0.5]),
            &DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            &DVector::from_column_slice(&[1.0]),
        )
        .unwrap();
        assert!((x[0] - 1.25).abs() < 1e-14 && (x[1] + 0.25).abs() < 1e-14);
    }

    #[test]
    fn l1_violation_of_contradictory_pair() {
        let c = DVector::from_column_slice(&[2.0, 4.0]);
        let jac = DMatrix::from_element(2, 2, 1.0);
        let lo = DVector::from_element(2, -3.5);
        let hi = DVector::from_element(2, 0.5);
        assert!((min_l1_violation_2d(&c, &jac, &lo, &hi, 201) - 2.0).abs() < 1e-9);
    }
}
