//! Named problem instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::projection::{project_parabola, Variant};
use crate::error::SolverError;
use crate::oracle::{AffineConstraints, FnConstraints, OracleResponse, ProblemSpec, SmoothQuadratic};

/// Weight of the smooth first-stage term in the two examples.
pub const MU: f64 = 1e5;

/// Default scenario count and seed of `two_stage_synthetic`.
pub const SYNTHETIC_SCENARIOS: usize = 32;
pub const SYNTHETIC_SEED: u64 = 7;

/// A problem together with its default starting point.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: ProblemSpec,
    pub x0: DVector<f64>,
    pub description: &'static str,
}

pub const INSTANCE_NAMES: [&str; 8] = [
    "example1",
    "example2",
    "affine_eq_smoke",
    "circle_eq",
    "circle_restore",
    "inconsistent_pair",
    "two_stage_synthetic",
    "two_stage_synthetic_constrained",
];

/// Build a registered instance by name.
pub fn build(name: &str) -> Option<Instance> {
    let instance = match name {
        "example1" => example(Variant::Ex1),
        "example2" => example(Variant::Ex2),
        "affine_eq_smoke" => affine_eq_smoke(),
        "circle_eq" => circle_eq(),
        "circle_restore" => circle_restore(),
        "inconsistent_pair" => inconsistent_pair(),
        "two_stage_synthetic" => two_stage_synthetic(SYNTHETIC_SCENARIOS, SYNTHETIC_SEED, false),
        "two_stage_synthetic_constrained" => two_stage_synthetic(SYNTHETIC_SCENARIOS, SYNTHETIC_SEED, true),
        _ => return None,
    };
    Some(instance.expect("built-in instance data is valid"))
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Squared distance from `x` to the second-stage set and its gradient `2(x − y*)`.
pub fn recourse(x: &DVector<f64>, variant: Variant) -> OracleResponse {
    let xa = [x[0], x[1], x[2]];
    let (y, dist_sq) = project_parabola(&xa, variant);
    OracleResponse::new(
        dist_sq,
        v(&[2.0 * (xa[0] - y[0]), 2.0 * (xa[1] - y[1]), 2.0 * (xa[2] - y[2])]),
    )
}

/// `x₁² + μ[(x₂ − ½)² + x₃²]` written as a quadratic.
pub fn example_smooth_term() -> SmoothQuadratic {
    SmoothQuadratic {
        hessian: DMatrix::from_diagonal(&v(&[2.0, 2.0 * MU, 2.0 * MU])),
        center: v(&[0.0, 0.5, 0.0]),
        linear: DVector::zeros(3),
        constant: 0.0,
    }
}

/// Total objective of an example: smooth first-stage term plus recourse.
pub fn example_objective(x: &DVector<f64>, variant: Variant) -> OracleResponse {
    let f = example_smooth_term();
    let mut resp = recourse(x, variant);
    resp.value += f.value(x);
    resp.subgradient += f.gradient(x);
    resp
}

pub fn example_box(variant: Variant) -> (DVector<f64>, DVector<f64>) {
    match variant {
        Variant::Ex1 => (v(&[-5.0, 0.0, -1.0]), v(&[5.0, 50.0, 10.0])),
        Variant::Ex2 => (v(&[-5.0, 0.0, -5.0]), v(&[5.0, 50.0, 5.0])),
    }
}

pub fn example(variant: Variant) -> Result<Instance, SolverError> {
    let (lower, upper) = example_box(variant);
    let (name, description) = match variant {
        Variant::Ex1 => ("example1", "two-stage example, second stage y2 <= y3^2 with y3 >= 0"),
        Variant::Ex2 => (
            "example2",
            "two-stage example, second stage y2 <= y3^2 with y3 in [-5, 5]",
        ),
    };
    let spec = ProblemSpec::new(name, lower, upper, move |x: &DVector<f64>| Ok(recourse(x, variant)))?
        .with_smooth_term(example_smooth_term())
        .with_witness(4.0);
    Ok(Instance {
        spec,
        x0: v(&[1.0, 50.0, 5.0]),
        description,
    })
}

fn half_sq_distance(
    target: DVector<f64>,
) -> impl Fn(&DVector<f64>) -> Result<OracleResponse, crate::error::OracleError> + Send + Sync {
    move |x: &DVector<f64>| {
        let diff = x - &target;
        Ok(OracleResponse::new(0.5 * diff.norm_squared(), diff))
    }
}

fn circle() -> FnConstraints {
    FnConstraints::new(
        1,
        |x: &DVector<f64>| DVector::from_element(1, x[0] * x[0] + x[1] * x[1] - 1.0),
        |x: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[2.0 * x[0], 2.0 * x[1]]),
    )
}

/// `½‖x − (2, ½)‖²` on the line `x₁ + x₂ = 1`; solution `(1.25, −0.25)`.
pub fn affine_eq_smoke() -> Result<Instance, SolverError> {
    let spec = ProblemSpec::new(
        "affine_eq_smoke",
        v(&[-5.0, -5.0]),
        v(&[5.0, 5.0]),
        half_sq_distance(v(&[2.0, 0.5])),
    )?
    .with_constraints(AffineConstraints::new(
        DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        v(&[-1.0]),
    ))
    .with_witness(1.0);
    Ok(Instance {
        spec,
        x0: v(&[0.0, 0.0]),
        description: "smooth quadratic on an affine line",
    })
}

/// Nonsmooth `min(‖x − a‖², ‖x − b‖²)` on the unit circle.
pub fn circle_eq() -> Result<Instance, SolverError> {
    let (a, b) = (v(&[1.5, 1.0]), v(&[-1.2, -0.6]));
    let objective = move |x: &DVector<f64>| {
        let (da, db) = (x - &a, x - &b);
        let (na, nb) = (da.norm_squared(), db.norm_squared());
        Ok(if na <= nb {
            OracleResponse::new(na, 2.0 * da)
        } else {
            OracleResponse::new(nb, 2.0 * db)
        })
    };
    let spec = ProblemSpec::new("circle_eq", v(&[-2.0, -2.0]), v(&[2.0, 2.0]), objective)?
        .with_constraints(circle())
        .with_witness(2.0);
    Ok(Instance {
        spec,
        x0: v(&[1.2, 0.9]),
        description: "min of two squared distances on the unit circle",
    })
}

/// Circle constraint started where its linearization has no solution in the box.
pub fn circle_restore() -> Result<Instance, SolverError> {
    let spec = ProblemSpec::new(
        "circle_restore",
        v(&[-2.0, -2.0]),
        v(&[2.0, 2.0]),
        half_sq_distance(v(&[1.0, 1.0])),
    )?
    .with_constraints(circle())
    .with_witness(1.0);
    Ok(Instance {
        spec,
        x0: v(&[0.1, 0.1]),
        description: "unit circle, inconsistent linearization at the start",
    })
}

/// `x₁ + x₂ = 1` and `x₁ + x₂ = −1`: every linearization is inconsistent and
/// the minimal ℓ₁ violation is 2.
pub fn inconsistent_pair() -> Result<Instance, SolverError> {
    let jac = DMatrix::from_column_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let spec = ProblemSpec::new(
        "inconsistent_pair",
        v(&[-2.0, -2.0]),
        v(&[2.0, 2.0]),
        half_sq_distance(v(&[0.5, -0.25])),
    )?
    .with_constraints(AffineConstraints::new(jac, v(&[-1.0, 1.0])))
    .with_witness(1.0);
    Ok(Instance {
        spec,
        x0: v(&[1.5, 1.5]),
        description: "two parallel contradictory affine constraints",
    })
}

/// One scenario `min_y ½‖y‖² + qᵀy  s.t. y ≥ Bx`, solved in closed form by
/// `y = max(Bx, −q)`.
#[derive(Debug, Clone)]
struct Scenario {
    b: DMatrix<f64>,
    q: DVector<f64>,
}

impl Scenario {
    fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let z = &self.b * x;
        let mut value = 0.0;
        let mut dz = DVector::zeros(z.len());
        for i in 0..z.len() {
            let y = z[i].max(-self.q[i]);
            value += 0.5 * y * y + self.q[i] * y;
            dz[i] = (z[i] + self.q[i]).max(0.0);
        }
        (value, self.b.tr_mul(&dz))
    }
}

/// Seeded two-stage instance with `k` scenarios on `x ∈ [0, 2]¹⁰` and smooth
/// first-stage cost `½‖x‖² + cᵀx`; optionally with `Σx = 4`.
pub fn two_stage_synthetic(k: usize, seed: u64, constrained: bool) -> Result<Instance, SolverError> {
    const N: usize = 10;
    const ROWS: usize = 5;
    if k == 0 {
        return Err(SolverError::Config(
            "two_stage_synthetic needs at least one scenario".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios: Vec<Scenario> = (0..k)
        .map(|_| Scenario {
            b: DMatrix::from_fn(ROWS, N, |_, _| rng.gen_range(-1.0..1.0)),
            q: DVector::from_fn(ROWS, |_, _| rng.gen_range(-1.0..1.0)),
        })
        .collect();
    let cost = DVector::from_fn(N, |_, _| rng.gen_range(-2.0..0.5));
    let witness = scenarios.iter().map(|s| s.b.norm_squared()).sum::<f64>() / k as f64;

    let objective = move |x: &DVector<f64>| {
        let mut value = 0.0;
        let mut grad = DVector::zeros(N);
        for s in &scenarios {
            let (v, g) = s.evaluate(x);
            value += v;
            grad += g;
        }
        let scale = 1.0 / scenarios.len() as f64;
        Ok(OracleResponse::new(scale * value, scale * grad))
    };
    let name = if constrained {
        "two_stage_synthetic_constrained"
    } else {
        "two_stage_synthetic"
    };
    let mut spec = ProblemSpec::new(name, DVector::zeros(N), DVector::from_element(N, 2.0), objective)?
        .with_smooth_term(SmoothQuadratic {
            hessian: DMatrix::identity(N, N),
            center: DVector::zeros(N),
            linear: cost,
            constant: 0.0,
        })
        .with_witness(witness);
    let mut x0 = DVector::from_element(N, 1.0);
    if constrained {
        spec = spec.with_constraints(AffineConstraints::new(DMatrix::from_element(N, 1, 1.0), v(&[-4.0])));
        x0 = DVector::from_element(N, 0.2);
    }
    Ok(Instance {
        spec,
        x0,
        description: if constrained {
            "seeded scenario recourse with a budget constraint"
        } else {
            "seeded scenario recourse on a box"
        },
    })
}
