//! Separable Hamiltonian systems with holonomic constraints.
//!
//! A system is `H(q, p) = ½ pᵀM⁻¹p + U(q)` together with `ν < m` constraints
//! `g(q) = 0`. The equations of motion are
//! `q̇ = M⁻¹p`, `ṗ = -∇U(q) - ∇g(q) λ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::solve_pivoted;

/// Default tolerance for [`check_consistency`].
pub const CONSISTENCY_TOL: f64 = 1e-12;

/// Problem definition. Derivatives are supplied by the implementor.
pub trait ConstrainedHamiltonianSystem: Send + Sync {
    /// State dimension `m`.
    fn dim(&self) -> usize;

    /// Number of constraints `ν` (zero for an unconstrained system).
    fn num_constraints(&self) -> usize;

    /// `M⁻¹ v`. The default is the identity mass matrix.
    fn mass_inverse_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }

    /// Potential energy `U(q)`.
    fn potential(&self, q: &DVector<f64>) -> f64;

    fn grad_potential(&self, q: &DVector<f64>) -> DVector<f64>;

    /// Constraint values `g(q) ∈ ℝ^ν`.
    fn constraints(&self, q: &DVector<f64>) -> DVector<f64>;

    /// `m × ν` Jacobian transpose `∇g(q)`, one column per constraint.
    fn constraint_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// `∇²g(q)(w, w) ∈ ℝ^ν`. Only the exact-multiplier reference needs it.
    fn constraint_hessian_bilinear(&self, _q: &DVector<f64>, _w: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

/// A point `(t, q, p)` of phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl State {
    pub fn new(t: f64, q: DVector<f64>, p: DVector<f64>) -> Self {
        Self { t, q, p }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.q.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }

    /// Max-norm of the concatenated `(q, p)`.
    pub fn max_norm(&self) -> f64 {
        self.q.amax().max(self.p.amax())
    }
}

/// `M⁻¹` applied to every column of `a`.
pub(crate) fn mass_inverse_columns<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    a: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for (j, col) in a.column_iter().enumerate() {
        out.set_column(j, &sys.mass_inverse_apply(&col.clone_owned()));
    }
    out
}

pub fn hamiltonian<S: ConstrainedHamiltonianSystem + ?Sized>(sys: &S, q: &DVector<f64>, p: &DVector<f64>) -> f64 {
    0.5 * p.dot(&sys.mass_inverse_apply(p)) + sys.potential(q)
}

/// `H(q, p) + λᵀ g(q)`.
pub fn augmented_hamiltonian<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    q: &DVector<f64>,
    p: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    hamiltonian(sys, q, p) + lambda.dot(&sys.constraints(q))
}

/// Hidden (velocity-level) constraints `∇g(q)ᵀ M⁻¹ p`.
pub fn hidden_constraints<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> DVector<f64> {
    sys.constraint_jacobian(q).tr_mul(&sys.mass_inverse_apply(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    /// `‖g(q₀)‖∞`
    pub g_norm: f64,
    /// `‖∇g(q₀)ᵀM⁻¹p₀‖∞`
    pub hidden_norm: f64,
    pub ok: bool,
}

/// Checks that `(q0, p0)` satisfies the constraints and the hidden constraints within `tol`.
pub fn check_consistency<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    q0: &DVector<f64>,
    p0: &DVector<f64>,
    tol: f64,
) -> ConsistencyReport {
    let g_norm = sys.constraints(q0).amax();
    let hidden_norm = hidden_constraints(sys, q0, p0).amax();
    ConsistencyReport {
        g_norm,
        hidden_norm,
        ok: g_norm <= tol && hidden_norm <= tol,
    }
}

/// The multiplier of the continuous flow at `(q, p)`.
///
/// Solves `[∇gᵀM⁻¹∇g] λ = ∇²g(M⁻¹p, M⁻¹p) - ∇gᵀM⁻¹∇U`.
pub fn lambda_exact<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    if sys.num_constraints() == 0 {
        return Ok(DVector::zeros(0));
    }
    let velocity = sys.mass_inverse_apply(p);
    let curvature = sys
        .constraint_hessian_bilinear(q, &velocity)
        .ok_or(Error::MissingHessian)?;
    let jac = sys.constraint_jacobian(q);
    let minv_jac = mass_inverse_columns(sys, &jac);
    let gram = jac.tr_mul(&minv_jac);
    let rhs = curvature - minv_jac.tr_mul(&sys.grad_potential(q));
    solve_pivoted(&gram, &rhs).ok_or(Error::RegularityViolation)
}
