//! Euclidean projection onto `{y : y₂ ≤ y₃², box}` used by the two example
//! recourse functions.

/// Second-stage feasible set of the two examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `y₁, y₂ ∈ [−5, 5]`, `y₃ ∈ [0, 10]`.
    Ex1,
    /// `y₁, y₂, y₃ ∈ [−5, 5]`.
    Ex2,
}

impl Variant {
    /// Bounds on `(y₁, y₂, y₃)`.
    pub fn y_bounds(self) -> [(f64, f64); 3] {
        match self {
            Variant::Ex1 => [(-5.0, 5.0), (-5.0, 5.0), (0.0, 10.0)],
            Variant::Ex2 => [(-5.0, 5.0), (-5.0, 5.0), (-5.0, 5.0)],
        }
    }

    pub fn is_feasible(self, y: &[f64; 3], tol: f64) -> bool {
        let b = self.y_bounds();
        (0..3).all(|i| y[i] >= b[i].0 - tol && y[i] <= b[i].1 + tol) && y[1] <= y[2] * y[2] + tol
    }
}

// A few ulps: a looser tie window makes r jump by the window size.
const TIE_TOL: f64 = 16.0 * f64::EPSILON;

/// Projection of `x` onto the feasible set and the squared distance.
///
/// Ties between several nearest points are broken toward the smallest `y₃`.
pub fn project_parabola(x: &[f64; 3], variant: Variant) -> ([f64; 3], f64) {
    let [(l1, u1), (l2, u2), (l3, u3)] = variant.y_bounds();
    let y1 = x[0].clamp(l1, u1);
    let (y2, y3) = project_2d(x[1], x[2], (l2, u2), (l3, u3));
    let y = [y1, y2, y3];
    let dist_sq = (0..3).map(|i| (x[i] - y[i]).powi(2)).sum();
    (y, dist_sq)
}

/// Project `(a, b)` onto `{(s, t) : s ≤ t², s ∈ [l2, u2], t ∈ [l3, u3]}`.
///
/// Assumes `l2 < 0 < u2`, so the set is nonempty and the lower edge `s = l2`
/// is never cut by the parabola.
fn project_2d(a: f64, b: f64, (l2, u2): (f64, f64), (l3, u3): (f64, f64)) -> (f64, f64) {
    let (ca, cb) = (a.clamp(l2, u2), b.clamp(l3, u3));
    if ca <= cb * cb {
        return (ca, cb);
    }

    let mut best: Option<(f64, f64, f64)> = None;
    let mut consider = |s: f64, t: f64| {
        let d = (a - s).powi(2) + (b - t).powi(2);
        match best {
            Some((bd, _, _)) if d > bd + TIE_TOL * (1.0 + bd) => {}
            Some((bd, _, bt)) if d >= bd - TIE_TOL * (1.0 + bd) && t >= bt => {}
            _ => best = Some((d, s, t)),
        }
    };

    // Curved edge s = t² with t² ≤ u2.
    let root = u2.sqrt();
    let (tl, tu) = (l3.max(-root), u3.min(root));
    if tl <= tu {
        consider(tl * tl, tl);
        consider(tu * tu, tu);
        // Stationarity of (t² − a)² + (t − b)²: 4t³ + (2 − 4a)t − 2b = 0.
        for t in depressed_cubic_roots(0.5 - a, -0.5 * b) {
            if t >= tl && t <= tu {
                consider(t * t, t);
            }
        }
    }
    // Straight edge s = u2 where the parabola lies above the box.
    for (lo, hi) in [(root.max(l3), u3), (l3, (-root).min(u3))] {
        if lo <= hi {
            consider(u2, b.clamp(lo, hi));
        }
    }
    // Lower edge s = l2 and the vertical edges t = l3, t = u3.
    consider(l2, cb);
    for t in [l3, u3] {
        consider(a.clamp(l2, u2.min(t * t)), t);
    }

    let (_, s, t) = best.expect("candidate set is nonempty");
    (s, t)
}

/// Real roots of `t³ + p·t + q = 0`, Newton-polished.
fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    let disc = (0.5 * q).powi(2) + (p / 3.0).powi(3);
    let mut roots = if disc >= 0.0 {
        let s = disc.sqrt();
        vec![(-0.5 * q + s).cbrt() + (-0.5 * q - s).cbrt()]
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3)
            .map(|k| r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    };
    for t in roots.iter_mut() {
        for _ in 0..3 {
            let f = *t * *t * *t + p * *t + q;
            let df = 3.0 * *t * *t + p;
            if df.abs() < 1e-300 {
                break;
            }
            *t -= f / df;
        }
    }
    roots
}
