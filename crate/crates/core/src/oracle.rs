//! Problem abstraction: a bounded box, smooth equality constraints with their
//! Jacobian, and a nonsmooth upper-C² objective oracle.
//!
//! The objective is split in two parts. The nonsmooth part `r` is only known
//! through an oracle returning a value and one Clarke subgradient. An optional
//! convex quadratic part `f` is known in closed form and enters the solver's
//! model exactly; the total objective is `f + r`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{OracleError, SolverError};

/// Tolerance applied to box membership checks before calling an oracle.
pub const BOX_TOL: f64 = 1e-12;

/// Optional bookkeeping returned by an oracle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleMetadata {
    /// Number of second-stage problems solved for this evaluation.
    pub subproblems: usize,
    /// Free-form status of the second-stage solve.
    pub status: Option<String>,
}

/// Value and one Clarke subgradient of the nonsmooth objective at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub value: f64,
    pub subgradient: DVector<f64>,
    pub metadata: Option<OracleMetadata>,
}

impl OracleResponse {
    pub fn new(value: f64, subgradient: DVector<f64>) -> Self {
        Self {
            value,
            subgradient,
            metadata: None,
        }
    }
}

/// Black-box oracle for the nonsmooth part of the objective.
///
/// Implementations must be safe to call concurrently on distinct points.
pub trait NonsmoothObjective: Send + Sync {
    fn evaluate(&self, x: &DVector<f64>) -> Result<OracleResponse, OracleError>;
}

impl<F> NonsmoothObjective for F
where
    F: Fn(&DVector<f64>) -> Result<OracleResponse, OracleError> + Send + Sync,
{
    fn evaluate(&self, x: &DVector<f64>) -> Result<OracleResponse, OracleError> {
        self(x)
    }
}

/// Smooth equality constraints `c(x) = 0` with Jacobian `∇c(x)` of shape n×m.
pub trait SmoothConstraints: Send + Sync {
    /// Number of constraints `m`.
    fn dim(&self) -> usize;
    fn values(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// True when `c` is affine, so its linearization is exact.
    fn is_affine(&self) -> bool {
        false
    }
}

/// `c(x) = Jᵀx + offset` with a constant n×m Jacobian `J`.
#[derive(Debug, Clone)]
pub struct AffineConstraints {
    jacobian: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineConstraints {
    pub fn new(jacobian: DMatrix<f64>, offset: DVector<f64>) -> Self {
        assert_eq!(jacobian.ncols(), offset.len(), "jacobian must be n x m");
        Self { jacobian, offset }
    }
}

impl SmoothConstraints for AffineConstraints {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn values(&self, x: &DVector<f64>) -> DVector<f64> {
        self.jacobian.tr_mul(x) + &self.offset
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian.clone()
    }

    fn is_affine(&self) -> bool {
        true
    }
}

type VectorFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type MatrixFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Constraints given by a pair of closures.
pub struct FnConstraints {
    m: usize,
    values: Box<VectorFn>,
    jacobian: Box<MatrixFn>,
}

impl FnConstraints {
    pub fn new<V, J>(m: usize, values: V, jacobian: J) -> Self
    where
        V: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            m,
            values: Box::new(values),
            jacobian: Box::new(jacobian),
        }
    }
}

impl SmoothConstraints for FnConstraints {
    fn dim(&self) -> usize {
        self.m
    }

    fn values(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.values)(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jacobian)(x)
    }
}

/// Convex quadratic `f(x) = ½(x − x_c)ᵀQ(x − x_c) + bᵀx + k` with `Q` positive
/// semidefinite. The centered form keeps values accurate when `Q` is large.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothQuadratic {
    pub hessian: DMatrix<f64>,
    pub center: DVector<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl SmoothQuadratic {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let dx = x - &self.center;
        0.5 * dx.dot(&(&self.hessian * &dx)) + self.linear.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * (x - &self.center) + &self.linear
    }
}

/// Empirical upper-C² constant `ρ` for an oracle over a box:
/// `r(x) − r(x̄) − ⟨g, x − x̄⟩ ≤ (ρ/2)‖x − x̄‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperC2Witness {
    pub constant: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl UpperC2Witness {
    /// Slack `(ρ/2)‖x − x̄‖² − [r(x) − r(x̄) − ⟨g, x − x̄⟩]`; nonnegative when
    /// the inequality holds.
    pub fn slack(&self, x: &DVector<f64>, at_x: f64, xbar: &DVector<f64>, at_xbar: &OracleResponse) -> f64 {
        let diff = x - xbar;
        0.5 * self.constant * diff.norm_squared() - (at_x - at_xbar.value - at_xbar.subgradient.dot(&diff))
    }
}

/// A bound-constrained, equality-constrained problem with an upper-C² objective.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    lower: DVector<f64>,
    upper: DVector<f64>,
    objective: Arc<dyn NonsmoothObjective>,
    constraints: Option<Arc<dyn SmoothConstraints>>,
    smooth: Option<SmoothQuadratic>,
    witness: Option<UpperC2Witness>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("m", &self.m())
            .field("lower", &self.lower.as_slice())
            .field("upper", &self.upper.as_slice())
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        lower: DVector<f64>,
        upper: DVector<f64>,
        objective: impl NonsmoothObjective + 'static,
    ) -> Result<Self, SolverError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(SolverError::Precondition(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] > upper[i] {
                return Err(SolverError::Precondition(format!(
                    "invalid box in coordinate {i}: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            lower,
            upper,
            objective: Arc::new(objective),
            constraints: None,
            smooth: None,
            witness: None,
        })
    }

    pub fn with_constraints(mut self, constraints: impl SmoothConstraints + 'static) -> Self {
        self.constraints = if constraints.dim() == 0 {
            None
        } else {
            Some(Arc::new(constraints))
        };
        self
    }

    pub fn with_smooth_term(mut self, smooth: SmoothQuadratic) -> Self {
        assert_eq!(smooth.hessian.nrows(), self.n());
        assert_eq!(smooth.linear.len(), self.n());
        self.smooth = Some(smooth);
        self
    }

    pub fn with_witness(mut self, constant: f64) -> Self {
        self.witness = Some(UpperC2Witness {
            constant,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        });
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn m(&self) -> usize {
        self.constraints.as_ref().map_or(0, |c| c.dim())
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn smooth_term(&self) -> Option<&SmoothQuadratic> {
        self.smooth.as_ref()
    }

    pub fn witness(&self) -> Option<&UpperC2Witness> {
        self.witness.as_ref()
    }

    /// True when there are no constraints or they are affine.
    pub fn has_affine_constraints(&self) -> bool {
        self.constraints.as_ref().is_none_or(|c| c.is_affine())
    }

    pub fn check_in_box(&self, x: &DVector<f64>) -> Result<(), OracleError> {
        if x.len() != self.n() {
            return Err(OracleError::DimensionMismatch {
                what: "point",
                expected: self.n(),
                got: x.len(),
            });
        }
        for i in 0..x.len() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(x[i] >= lo - BOX_TOL && x[i] <= hi + BOX_TOL) {
                return Err(OracleError::OutOfBounds {
                    index: i,
                    value: x[i],
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(())
    }

    /// Clamp `x` into the box.
    pub fn project_to_box(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(&v, (&lo, &hi))| v.clamp(lo, hi)),
        )
    }

    /// Value and subgradient of the nonsmooth part `r` only.
    pub fn evaluate_objective(&self, x: &DVector<f64>) -> Result<OracleResponse, OracleError> {
        self.check_in_box(x)?;
        let resp = self.objective.evaluate(x)?;
        if resp.subgradient.len() != self.n() {
            return Err(OracleError::DimensionMismatch {
                what: "subgradient",
                expected: self.n(),
                got: resp.subgradient.len(),
            });
        }
        if !resp.value.is_finite() || resp.subgradient.iter().any(|g| !g.is_finite()) {
            return Err(OracleError::OracleFailure(format!(
                "non-finite oracle output at {:?}",
                x.as_slice()
            )));
        }
        Ok(resp)
    }

    /// Value and subgradient of the total objective `f + r`.
    pub fn evaluate_total(&self, x: &DVector<f64>) -> Result<OracleResponse, OracleError> {
        let mut resp = self.evaluate_objective(x)?;
        if let Some(f) = &self.smooth {
            resp.value += f.value(x);
            resp.subgradient += f.gradient(x);
        }
        Ok(resp)
    }

    /// Constraint values (length m) and Jacobian (n×m). Empty for m = 0.
    pub fn evaluate_constraints(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), OracleError> {
        let n = self.n();
        let Some(cons) = &self.constraints else {
            return Ok((DVector::zeros(0), DMatrix::zeros(n, 0)));
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::EvaluationFailure("constraint input"));
        }
        let values = cons.values(x);
        let jac = cons.jacobian(x);
        let m = cons.dim();
        if values.len() != m {
            return Err(OracleError::DimensionMismatch {
                what: "constraint values",
                expected: m,
                got: values.len(),
            });
        }
        if jac.nrows() != n || jac.ncols() != m {
            return Err(OracleError::DimensionMismatch {
                what: "constraint jacobian",
                expected: n * m,
                got: jac.nrows() * jac.ncols(),
            });
        }
        if values.iter().chain(jac.iter()).any(|v| !v.is_finite()) {
            return Err(OracleError::EvaluationFailure("constraints"));
        }
        Ok((values, jac))
    }

    /// Constraint values only.
    pub fn constraint_values(&self, x: &DVector<f64>) -> Result<DVector<f64>, OracleError> {
        let Some(cons) = &self.constraints else {
            return Ok(DVector::zeros(0));
        };
        let values = cons.values(x);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::EvaluationFailure("constraints"));
        }
        Ok(values)
    }
}

/// Evaluate the nonsmooth objective oracle at `x`.
pub fn evaluate_objective(spec: &ProblemSpec, x: &DVector<f64>) -> Result<OracleResponse, OracleError> {
    spec.evaluate_objective(x)
}

/// Evaluate `c(x)` and `∇c(x)`.
pub fn evaluate_constraints(spec: &ProblemSpec, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), OracleError> {
    spec.evaluate_constraints(x)
}
