//! HBVM(k,s) step kernel for separable Hamiltonian systems with holonomic constraints.
//!
//! One step from `(q₀, p₀)` looks for the Legendre coefficients `γ̂_j` of `M⁻¹v`
//! on `[0, h]`, the projections `ψ̂_j`, `ρ̂_j` of `∇U(u)` and `∇g(u)`, and a
//! constant multiplier `λ` such that
//!
//! ```text
//! u(ĉ_i h) = q₀ + h Σ_j Î_ij γ̂_j
//! v(ĉ_i h) = p₀ - h Σ_j Î_ij (ψ̂_j + ρ̂_j λ)
//! γ̂_j = M⁻¹ Σ_ℓ b̂_ℓ P_j(ĉ_ℓ) v(ĉ_ℓ h)
//! ψ̂_j = Σ_ℓ b̂_ℓ P_j(ĉ_ℓ) ∇U(u(ĉ_ℓ h)),   ρ̂_j = Σ_ℓ b̂_ℓ P_j(ĉ_ℓ) ∇g(u(ĉ_ℓ h))
//! ```
//!
//! with `λ` fixed by the line-integral condition `g(q₁) = g(q₀)`, which is a
//! `ν × ν` linear system in `λ` (see [`solve_lambda`]). The new point is
//! `q₁ = q₀ + h γ̂₀`, `p₁ = p₀ - h (ψ̂₀ + ρ̂₀ λ)`.
//!
//! The coupled equations are solved by fixed-point iteration. Each sweep maps
//! `γ̂` to stage positions, projects `∇U` and `∇g`, solves for `λ`, rebuilds
//! the stage momenta and projects them back onto `γ̂`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{check_consistency, mass_inverse_columns, ConstrainedHamiltonianSystem, State, CONSISTENCY_TOL};
use crate::polybasis::BasisTables;

pub const DEFAULT_FP_TOL: f64 = 1e-14;
pub const DEFAULT_FP_MAX_ITERS: usize = 200;

/// Tolerance and iteration cap of the per-step fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_FP_TOL,
            max_iters: DEFAULT_FP_MAX_ITERS,
        }
    }
}

/// How the per-step multiplier is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaPolicy {
    /// Solve the multiplier system every sweep (`ν ≥ 1`).
    Solve,
    /// Unconstrained system (`ν = 0`): plain HBVM(k,s).
    None,
}

impl LambdaPolicy {
    pub fn for_system<S: ConstrainedHamiltonianSystem + ?Sized>(sys: &S) -> Self {
        if sys.num_constraints() == 0 {
            LambdaPolicy::None
        } else {
            LambdaPolicy::Solve
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbvmConfig {
    pub k: usize,
    pub s: usize,
    pub h: f64,
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub lambda_policy: LambdaPolicy,
}

impl HbvmConfig {
    /// HBVM(k,s) with stepsize `h` and default fixed-point settings.
    pub fn new(k: usize, s: usize, h: f64) -> Result<Self> {
        let cfg = Self {
            k,
            s,
            h,
            fp_tol: DEFAULT_FP_TOL,
            fp_max_iters: DEFAULT_FP_MAX_ITERS,
            lambda_policy: LambdaPolicy::Solve,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_policy_for<S: ConstrainedHamiltonianSystem + ?Sized>(mut self, sys: &S) -> Self {
        self.lambda_policy = LambdaPolicy::for_system(sys);
        self
    }

    pub fn with_fp_tol(mut self, tol: f64) -> Self {
        self.fp_tol = tol;
        self
    }

    pub fn with_fp_max_iters(mut self, iters: usize) -> Self {
        self.fp_max_iters = iters;
        self
    }

    pub fn with_fixed_point(self, settings: FixedPointSettings) -> Self {
        self.with_fp_tol(settings.tol).with_fp_max_iters(settings.max_iters)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.k < self.s {
            return Err(Error::InvalidConfig(format!(
                "need k >= s >= 1, got k = {}, s = {}",
                self.k, self.s
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "stepsize must be positive, got {}",
                self.h
            )));
        }
        if self.fp_tol.is_nan() || self.fp_tol <= 0.0 || self.fp_max_iters == 0 {
            return Err(Error::InvalidConfig(
                "fixed-point tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }

    fn check_against<S: ConstrainedHamiltonianSystem + ?Sized>(&self, sys: &S, tables: &BasisTables) -> Result<()> {
        self.validate()?;
        if tables.s() != self.s || tables.k() != self.k {
            return Err(Error::InvalidConfig(format!(
                "tables built for (k, s) = ({}, {}) but config asks for ({}, {})",
                tables.k(),
                tables.s(),
                self.k,
                self.s
            )));
        }
        if self.lambda_policy != LambdaPolicy::for_system(sys) {
            return Err(Error::InvalidConfig(format!(
                "multiplier policy {:?} does not match a system with {} constraints",
                self.lambda_policy,
                sys.num_constraints()
            )));
        }
        if sys.num_constraints() >= sys.dim() && sys.num_constraints() > 0 {
            return Err(Error::InvalidConfig(
                "need fewer constraints than the state dimension".into(),
            ));
        }
        Ok(())
    }
}

/// Unknowns of one step together with fixed-point diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients {
    /// `γ̂_0, …, γ̂_{s-1}`, each in `ℝ^m`.
    pub gamma: Vec<DVector<f64>>,
    /// `ψ̂_0, …, ψ̂_{s-1}`, each in `ℝ^m`.
    pub psi: Vec<DVector<f64>>,
    /// `ρ̂_0, …, ρ̂_{s-1}`, each `m × ν`.
    pub rho: Vec<DMatrix<f64>>,
    /// The step's constant multiplier.
    pub lambda: DVector<f64>,
    pub iters: usize,
    pub converged: bool,
    /// Max-norm of the last `(γ̂, h·λ)` increment.
    pub last_increment: f64,
}

impl SpectralCoefficients {
    /// Starting guess: `γ̂₀ = M⁻¹p₀`, every other block zero.
    pub fn initial<S: ConstrainedHamiltonianSystem + ?Sized>(
        sys: &S,
        s: usize,
        p0: &DVector<f64>,
        lambda: DVector<f64>,
    ) -> Self {
        let m = sys.dim();
        let nu = sys.num_constraints();
        let mut gamma = vec![DVector::zeros(m); s];
        gamma[0] = sys.mass_inverse_apply(p0);
        Self {
            gamma,
            psi: vec![DVector::zeros(m); s],
            rho: vec![DMatrix::zeros(m, nu); s],
            lambda,
            iters: 0,
            converged: false,
            last_increment: f64::INFINITY,
        }
    }
}

/// `u(ĉ_i h) = q₀ + h Σ_j Î_ij γ̂_j` for `i = 1..k`.
pub fn stage_positions(q0: &DVector<f64>, gamma: &[DVector<f64>], tables: &BasisTables, h: f64) -> Vec<DVector<f64>> {
    let i_hat = tables.i_hat();
    (0..tables.k())
        .map(|i| {
            let mut u = q0.clone();
            for (j, g) in gamma.iter().enumerate() {
                u.axpy(h * i_hat[(i, j)], g, 1.0);
            }
            u
        })
        .collect()
}

/// `v(ĉ_i h) = p₀ - h Σ_j Î_ij (ψ̂_j + ρ̂_j λ)` for `i = 1..k`.
pub fn stage_momenta(
    p0: &DVector<f64>,
    psi: &[DVector<f64>],
    rho: &[DMatrix<f64>],
    lambda: &DVector<f64>,
    tables: &BasisTables,
    h: f64,
) -> Vec<DVector<f64>> {
    let forces: Vec<DVector<f64>> = psi
        .iter()
        .zip(rho)
        .map(|(ps, r)| if lambda.is_empty() { ps.clone() } else { ps + r * lambda })
        .collect();
    let i_hat = tables.i_hat();
    (0..tables.k())
        .map(|i| {
            let mut v = p0.clone();
            for (j, f) in forces.iter().enumerate() {
                v.axpy(-h * i_hat[(i, j)], f, 1.0);
            }
            v
        })
        .collect()
}

/// Stage positions and momenta implied by `coeffs`.
pub fn stage_states(
    q0: &DVector<f64>,
    p0: &DVector<f64>,
    coeffs: &SpectralCoefficients,
    tables: &BasisTables,
    h: f64,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    (
        stage_positions(q0, &coeffs.gamma, tables, h),
        stage_momenta(p0, &coeffs.psi, &coeffs.rho, &coeffs.lambda, tables, h),
    )
}

/// Discrete Legendre projection `Σ_ℓ b̂_ℓ P_j(ĉ_ℓ) x_ℓ`, `j < s`.
fn project_vectors(values: &[DVector<f64>], tables: &BasisTables) -> Vec<DVector<f64>> {
    let (p_hat, b) = (tables.p_hat(), tables.weights());
    (0..tables.s())
        .map(|j| {
            let mut acc = DVector::zeros(values[0].len());
            for (l, x) in values.iter().enumerate() {
                acc.axpy(b[l] * p_hat[(l, j)], x, 1.0);
            }
            acc
        })
        .collect()
}

fn project_matrices(values: &[DMatrix<f64>], tables: &BasisTables) -> Vec<DMatrix<f64>> {
    let (p_hat, b) = (tables.p_hat(), tables.weights());
    let (r, c) = values[0].shape();
    (0..tables.s())
        .map(|j| {
            let mut acc = DMatrix::zeros(r, c);
            for (l, x) in values.iter().enumerate() {
                acc += x * (b[l] * p_hat[(l, j)]);
            }
            acc
        })
        .collect()
}

fn project_forces<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    positions: &[DVector<f64>],
    tables: &BasisTables,
) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
    let grad_u: Vec<DVector<f64>> = positions.iter().map(|u| sys.grad_potential(u)).collect();
    let psi = project_vectors(&grad_u, tables);
    let rho = if sys.num_constraints() == 0 {
        vec![DMatrix::zeros(sys.dim(), 0); tables.s()]
    } else {
        let jac: Vec<DMatrix<f64>> = positions.iter().map(|u| sys.constraint_jacobian(u)).collect();
        project_matrices(&jac, tables)
    };
    (psi, rho)
}

fn project_velocity<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    momenta: &[DVector<f64>],
    tables: &BasisTables,
) -> Vec<DVector<f64>> {
    project_vectors(momenta, tables)
        .into_iter()
        .map(|v| sys.mass_inverse_apply(&v))
        .collect()
}

/// `(γ̂, ψ̂, ρ̂)`: one vector or matrix per basis index.
pub type Coefficients = (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DMatrix<f64>>);

/// Quadrature projections `(γ̂, ψ̂, ρ̂)` of the stage data.
pub fn compute_coefficients<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    positions: &[DVector<f64>],
    momenta: &[DVector<f64>],
    tables: &BasisTables,
) -> Coefficients {
    let gamma = project_velocity(sys, momenta, tables);
    let (psi, rho) = project_forces(sys, positions, tables);
    (gamma, psi, rho)
}

/// Solves the `ν × ν` multiplier system
///
/// ```text
/// h [ξ₀ ρ̂₀ᵀM⁻¹ρ̂₀ + Σ_{j≥1} ξ_j (ρ̂_jᵀM⁻¹ρ̂_{j-1} - ρ̂_{j-1}ᵀM⁻¹ρ̂_j)] λ
///     = ρ̂₀ᵀM⁻¹(p₀ - h ξ₀ ψ̂₀) - h Σ_{j≥1} ξ_j (ρ̂_jᵀM⁻¹ψ̂_{j-1} - ρ̂_{j-1}ᵀM⁻¹ψ̂_j)
/// ```
///
/// which expresses `g(q₁) - g(q₀) = h Σ_j ρ̂_jᵀ γ̂_j = 0`.
pub fn solve_lambda<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    rho: &[DMatrix<f64>],
    psi: &[DVector<f64>],
    p0: &DVector<f64>,
    tables: &BasisTables,
    h: f64,
) -> Result<DVector<f64>> {
    let xi = tables.xi();
    let minv_rho: Vec<DMatrix<f64>> = rho.iter().map(|r| mass_inverse_columns(sys, r)).collect();

    let mut a = minv_rho[0].tr_mul(&rho[0]) * xi[0];
    let mut b = minv_rho[0].tr_mul(&(p0 - &psi[0] * (h * xi[0])));
    for j in 1..rho.len() {
        a += (minv_rho[j].tr_mul(&rho[j - 1]) - minv_rho[j - 1].tr_mul(&rho[j])) * xi[j];
        b -= (minv_rho[j].tr_mul(&psi[j - 1]) - minv_rho[j - 1].tr_mul(&psi[j])) * (h * xi[j]);
    }
    a *= h;
    crate::linalg::solve_pivoted(&a, &b).ok_or(Error::SingularMultiplierSystem)
}

fn max_abs_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// Core of a step with signed stepsize `h` and multiplier warm start.
fn advance<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    config: &HbvmConfig,
    tables: &BasisTables,
    state: &State,
    h: f64,
    lambda_guess: DVector<f64>,
) -> Result<(State, SpectralCoefficients)> {
    let constrained = config.lambda_policy == LambdaPolicy::Solve;
    let mut coeffs = SpectralCoefficients::initial(sys, config.s, &state.p, lambda_guess);

    while coeffs.iters < config.fp_max_iters {
        coeffs.iters += 1;
        let positions = stage_positions(&state.q, &coeffs.gamma, tables, h);
        let (psi, rho) = project_forces(sys, &positions, tables);
        let lambda = if constrained {
            solve_lambda(sys, &rho, &psi, &state.p, tables, h)?
        } else {
            DVector::zeros(0)
        };
        let momenta = stage_momenta(&state.p, &psi, &rho, &lambda, tables, h);
        let gamma = project_velocity(sys, &momenta, tables);

        // λ is measured through the impulse h·λ it adds to the momentum; λ itself
        // carries round-off of order eps/h.
        let increment = max_abs_diff(&gamma, &coeffs.gamma).max(h.abs() * (&lambda - &coeffs.lambda).amax());
        let size = gamma.iter().map(|g| g.amax()).fold(h.abs() * lambda.amax(), f64::max);
        coeffs.gamma = gamma;
        coeffs.psi = psi;
        coeffs.rho = rho;
        coeffs.lambda = lambda;
        coeffs.last_increment = increment;
        if !increment.is_finite() {
            break;
        }
        if increment <= config.fp_tol * (1.0 + size) {
            coeffs.converged = true;
            break;
        }
    }
    if !coeffs.converged {
        return Err(Error::NotConverged {
            iters: coeffs.iters,
            increment: coeffs.last_increment,
        });
    }

    let q1 = &state.q + &coeffs.gamma[0] * h;
    let mut force = coeffs.psi[0].clone();
    if constrained {
        force += &coeffs.rho[0] * &coeffs.lambda;
    }
    let p1 = &state.p - force * h;
    Ok((State::new(state.t + h, q1, p1), coeffs))
}

/// One HBVM(k,s) step from `state` with the multiplier started at zero.
pub fn step<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    config: &HbvmConfig,
    tables: &BasisTables,
    state: &State,
) -> Result<(State, SpectralCoefficients)> {
    config.check_against(sys, tables)?;
    advance(
        sys,
        config,
        tables,
        state,
        config.h,
        DVector::zeros(sys.num_constraints()),
    )
}

/// One step with the multiplier iteration started from `lambda_guess`.
pub fn step_warm<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    config: &HbvmConfig,
    tables: &BasisTables,
    state: &State,
    lambda_guess: &DVector<f64>,
) -> Result<(State, SpectralCoefficients)> {
    config.check_against(sys, tables)?;
    if lambda_guess.len() != sys.num_constraints() {
        return Err(Error::Dimension(format!(
            "multiplier guess has length {}, system has {} constraints",
            lambda_guess.len(),
            sys.num_constraints()
        )));
    }
    advance(sys, config, tables, state, config.h, lambda_guess.clone())
}

/// Steps forward with `h`, then back with `-h`, and returns the max-norm
/// distance of the result from the starting `(q, p)`.
pub fn step_backward_roundtrip<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    config: &HbvmConfig,
    tables: &BasisTables,
    state: &State,
) -> Result<f64> {
    config.check_against(sys, tables)?;
    let nu = sys.num_constraints();
    let (forward, coeffs) = advance(sys, config, tables, state, config.h, DVector::zeros(nu))?;
    let (back, _) = advance(sys, config, tables, &forward, -config.h, coeffs.lambda)?;
    Ok((back.q - &state.q).amax().max((back.p - &state.p).amax()))
}

/// One mesh point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    /// Multiplier of the step leaving this point; absent on the last point.
    pub lambda: Option<DVector<f64>>,
    /// Fixed-point sweeps of the step leaving this point.
    pub iters: Option<usize>,
}

/// Numerical solution on the uniform mesh `t_n = n h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last_state(&self) -> Option<State> {
        self.points
            .last()
            .map(|pt| State::new(pt.t, pt.q.clone(), pt.p.clone()))
    }
}

/// A failed integration: the failing step index, its cause, and the mesh
/// points computed before it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("step {step} failed: {error}")]
pub struct IntegrationFailure {
    pub step: usize,
    #[source]
    pub error: Error,
    pub partial: Trajectory,
}

/// Applies `n_steps` steps from `(q0, p0)` at `t = 0`.
pub fn integrate<S: ConstrainedHamiltonianSystem + ?Sized>(
    sys: &S,
    config: &HbvmConfig,
    tables: &BasisTables,
    q0: &DVector<f64>,
    p0: &DVector<f64>,
    n_steps: usize,
) -> std::result::Result<Trajectory, IntegrationFailure> {
    let mut traj = Trajectory {
        h: config.h,
        points: vec![TrajectoryPoint {
            t: 0.0,
            q: q0.clone(),
            p: p0.clone(),
            lambda: None,
            iters: None,
        }],
    };
    let fail = |error, traj: Trajectory| IntegrationFailure {
        step: 0,
        error,
        partial: traj,
    };
    if let Err(e) = config.check_against(sys, tables) {
        return Err(fail(e, traj));
    }
    if q0.len() != sys.dim() || p0.len() != sys.dim() {
        let msg = format!(
            "initial state has lengths ({}, {}), system dimension is {}",
            q0.len(),
            p0.len(),
            sys.dim()
        );
        return Err(fail(Error::Dimension(msg), traj));
    }
    if sys.num_constraints() > 0 {
        let report = check_consistency(sys, q0, p0, CONSISTENCY_TOL);
        if !report.ok {
            let msg = format!(
                "initial data not consistent: |g| = {:e}, |hidden| = {:e}",
                report.g_norm, report.hidden_norm
            );
            return Err(fail(Error::InvalidConfig(msg), traj));
        }
    }

    let mut state = State::new(0.0, q0.clone(), p0.clone());
    let mut lambda = DVector::zeros(sys.num_constraints());
    for n in 0..n_steps {
        match advance(sys, config, tables, &state, config.h, lambda.clone()) {
            Ok((mut next, coeffs)) => {
                next.t = (n + 1) as f64 * config.h;
                let last = traj.points.last_mut().expect("trajectory is never empty");
                last.lambda = Some(coeffs.lambda.clone());
                last.iters = Some(coeffs.iters);
                traj.points.push(TrajectoryPoint {
                    t: next.t,
                    q: next.q.clone(),
                    p: next.p.clone(),
                    lambda: None,
                    iters: None,
                });
                lambda = coeffs.lambda;
                state = next;
            }
            Err(error) => {
                return Err(IntegrationFailure {
                    step: n,
                    error,
                    partial: traj,
                })
            }
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hamiltonian;
    use crate::polybasis::build_tables;
    use crate::problems::{conical_pendulum, planar_pendulum};
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    struct FreeParticle;

    impl ConstrainedHamiltonianSystem for FreeParticle {
        fn dim(&self) -> usize {
            2
        }
        fn num_constraints(&self) -> usize {
            0
        }
        fn mass_inverse_apply(&self, v: &DVector<f64>) -> DVector<f64> {
            v * 0.25
        }
        fn potential(&self, _q: &DVector<f64>) -> f64 {
            0.0
        }
        fn grad_potential(&self, _q: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(2)
        }
        fn constraints(&self, _q: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn constraint_jacobian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(2, 0)
        }
    }

    #[test]
    fn zero_coefficients_give_constant_stages() {
        let tables = build_tables(2, 4).unwrap();
        let pend = planar_pendulum();
        let mut coeffs = SpectralCoefficients::initial(pend.system.as_ref(), 2, &v(&[1.0, 0.0]), v(&[0.3]));
        coeffs.gamma.iter_mut().for_each(|g| g.fill(0.0));
        let q0 = v(&[0.0, -1.0]);
        let p0 = v(&[1.0, 0.0]);
        let (u, w) = stage_states(&q0, &p0, &coeffs, &tables, 0.1);
        assert_eq!(u.len(), 4);
        assert!(u.iter().all(|ui| *ui == q0));
        assert!(w.iter().all(|wi| *wi == p0));
    }

    #[test]
    fn constant_velocity_stage_positions() {
        let tables = build_tables(1, 3).unwrap();
        let pend = planar_pendulum();
        let p0 = v(&[1.0, 0.5]);
        let coeffs = SpectralCoefficients::initial(pend.system.as_ref(), 1, &p0, v(&[0.0]));
        let q0 = v(&[0.2, -0.9]);
        let (u, _) = stage_states(&q0, &p0, &coeffs, &tables, 0.1);
        for (ui, &c) in u.iter().zip(tables.nodes()) {
            assert_abs_diff_eq!((ui - (&q0 + &p0 * (0.1 * c))).amax(), 0.0, epsilon = 1e-16);
        }
    }

    #[test]
    fn first_sweep_matches_hand_computation() {
        // HBVM(1,1) on the planar pendulum, h = 0.1, from the zero-correction guess.
        let h = 0.1;
        let tables = build_tables(1, 1).unwrap();
        let pend = planar_pendulum();
        let sys = pend.system.as_ref();
        let q0 = v(&[0.0, -1.0]);
        let p0 = v(&[1.0, 0.0]);
        let coeffs = SpectralCoefficients::initial(sys, 1, &p0, v(&[0.0]));
        let u = stage_positions(&q0, &coeffs.gamma, &tables, h);
        // Midpoint: u = q0 + h/2 p0 = (0.05, -1).
        assert_abs_diff_eq!(u[0][0], 0.05, epsilon = 1e-16);
        assert_abs_diff_eq!(u[0][1], -1.0, epsilon = 1e-16);

        let (_, psi, rho) = compute_coefficients(sys, &u, std::slice::from_ref(&p0), &tables);
        // psi = e2, rho = 2u = (0.1, -2).
        let lambda = solve_lambda(sys, &rho, &psi, &p0, &tables, h).unwrap();
        // h/2 (0.01 + 4) λ = (0.1, -2)·((1, 0) - 0.05 (0, 1)) = 0.2.
        let lambda_hand = 0.2 / (0.05 * 4.01);
        assert_abs_diff_eq!(lambda[0], lambda_hand, epsilon = 1e-15);

        let w = stage_momenta(&p0, &psi, &rho, &lambda, &tables, h);
        // v = p0 - h/2 (e2 + λ (0.1, -2)).
        let vx = 1.0 - 0.05 * 0.1 * lambda_hand;
        let vy = -0.05 * (1.0 - 2.0 * lambda_hand);
        assert_abs_diff_eq!(w[0][0], vx, epsilon = 1e-15);
        assert_abs_diff_eq!(w[0][1], vy, epsilon = 1e-15);
    }

    #[test]
    fn constant_data_projects_onto_first_coefficient() {
        let tables = build_tables(3, 5).unwrap();
        let pend = planar_pendulum();
        let sys = pend.system.as_ref();
        let q0 = v(&[0.6, -0.8]);
        let p0 = v(&[0.8, 0.6]);
        let u = vec![q0.clone(); 5];
        let w = vec![p0.clone(); 5];
        let (gamma, _, rho) = compute_coefficients(sys, &u, &w, &tables);
        assert_abs_diff_eq!((&gamma[0] - &p0).amax(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((&rho[0] - sys.constraint_jacobian(&q0)).amax(), 0.0, epsilon = 1e-15);
        for j in 1..3 {
            assert!(gamma[j].amax() < 1e-15);
            assert!(rho[j].amax() < 1e-15);
        }
    }

    #[test]
    fn solve_lambda_diagonal_case() {
        // ρ̂₀ with M⁻¹-orthonormal column, ψ̂ = 0: λ = w / (h ξ₀).
        let tables = build_tables(1, 1).unwrap();
        let pend = planar_pendulum();
        let rho = vec![DMatrix::from_column_slice(2, 1, &[0.6, 0.8])];
        let psi = vec![DVector::zeros(2)];
        let p0 = v(&[1.0, 2.0]);
        let w = 0.6 + 1.6;
        let lambda = solve_lambda(pend.system.as_ref(), &rho, &psi, &p0, &tables, 0.2).unwrap();
        assert_abs_diff_eq!(lambda[0], w / (0.2 * 0.5), epsilon = 1e-14);
    }

    #[test]
    fn solve_lambda_singular() {
        let tables = build_tables(1, 1).unwrap();
        let pend = planar_pendulum();
        let rho = vec![DMatrix::zeros(2, 1)];
        let psi = vec![DVector::zeros(2)];
        let res = solve_lambda(pend.system.as_ref(), &rho, &psi, &v(&[1.0, 0.0]), &tables, 0.1);
        assert_eq!(res, Err(Error::SingularMultiplierSystem));
    }

    #[test]
    fn free_particle_is_exact_in_one_sweep() {
        let tables = build_tables(2, 3).unwrap();
        let cfg = HbvmConfig::new(3, 2, 0.3).unwrap().with_policy_for(&FreeParticle);
        let state = State::new(0.0, v(&[1.0, 2.0]), v(&[4.0, -8.0]));
        let (next, coeffs) = step(&FreeParticle, &cfg, &tables, &state).unwrap();
        assert_eq!(coeffs.iters, 1);
        assert_abs_diff_eq!(next.q[0], 1.0 + 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(next.q[1], 2.0 - 0.6, epsilon = 1e-15);
        assert_eq!(next.p, state.p);
        assert_abs_diff_eq!(next.t, 0.3);
    }

    #[test]
    fn conical_one_step_conserves() {
        let cone = conical_pendulum();
        let sys = cone.system.as_ref();
        let period = cone.period.unwrap();
        let tables = build_tables(2, 2).unwrap();
        let cfg = HbvmConfig::new(2, 2, period / 10.0).unwrap();
        let (next, coeffs) = step(sys, &cfg, &tables, &cone.initial).unwrap();
        assert!(coeffs.converged);
        assert!(sys.constraints(&next.q).amax() < 1e-14);
        let dh = hamiltonian(sys, &next.q, &next.p) - hamiltonian(sys, &cone.initial.q, &cone.initial.p);
        assert!(dh.abs() < 1e-15, "{dh:e}");
        assert_abs_diff_eq!(coeffs.lambda[0], 0.5f64.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn non_convergence_is_an_error() {
        let pend = planar_pendulum();
        let tables = build_tables(1, 1).unwrap();
        let cfg = HbvmConfig::new(1, 1, 0.1).unwrap().with_fp_max_iters(2);
        let res = step(pend.system.as_ref(), &cfg, &tables, &pend.initial);
        assert!(matches!(res, Err(Error::NotConverged { iters: 2, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(HbvmConfig::new(1, 2, 0.1).is_err());
        assert!(HbvmConfig::new(2, 2, 0.0).is_err());
        assert!(HbvmConfig::new(2, 2, -0.1).is_err());
        assert!(HbvmConfig::new(2, 0, 0.1).is_err());
        assert!(HbvmConfig::new(2, 2, 0.1).unwrap().with_fp_tol(0.0).validate().is_err());

        let pend = planar_pendulum();
        let cfg = HbvmConfig::new(2, 2, 0.1).unwrap();
        let wrong_tables = build_tables(1, 1).unwrap();
        assert!(matches!(
            step(pend.system.as_ref(), &cfg, &wrong_tables, &pend.initial),
            Err(Error::InvalidConfig(_))
        ));
        let unconstrained = cfg.clone().with_policy_for(&FreeParticle);
        let tables = build_tables(2, 2).unwrap();
        assert!(matches!(
            step(pend.system.as_ref(), &unconstrained, &tables, &pend.initial),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn integrate_zero_steps() {
        let pend = planar_pendulum();
        let tables = build_tables(1, 1).unwrap();
        let cfg = HbvmConfig::new(1, 1, 0.1).unwrap();
        let traj = integrate(pend.system.as_ref(), &cfg, &tables, &pend.initial.q, &pend.initial.p, 0).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.points[0].t, 0.0);
        assert_eq!(traj.points[0].q, pend.initial.q);
        assert!(traj.points[0].lambda.is_none());
    }

    #[test]
    fn integrate_records_mesh_and_multipliers() {
        let pend = planar_pendulum();
        let tables = build_tables(2, 2).unwrap();
        let cfg = HbvmConfig::new(2, 2, 0.05).unwrap();
        let traj = integrate(pend.system.as_ref(), &cfg, &tables, &pend.initial.q, &pend.initial.p, 7).unwrap();
        assert_eq!(traj.len(), 8);
        for (n, pt) in traj.points.iter().enumerate() {
            assert_eq!(pt.t, n as f64 * 0.05);
            assert_eq!(pt.lambda.is_some(), n < 7);
            assert_eq!(pt.iters.is_some(), n < 7);
        }
    }

    #[test]
    fn integrate_rejects_inconsistent_data() {
        let pend = planar_pendulum();
        let tables = build_tables(1, 1).unwrap();
        let cfg = HbvmConfig::new(1, 1, 0.1).unwrap();
        let err = integrate(
            pend.system.as_ref(),
            &cfg,
            &tables,
            &v(&[0.0, -1.0]),
            &v(&[0.0, 1.0]),
            3,
        )
        .unwrap_err();
        assert_eq!(err.step, 0);
        assert_eq!(err.partial.len(), 1);
    }

    #[test]
    fn integrate_reports_failing_step() {
        let pend = planar_pendulum();
        let tables = build_tables(1, 1).unwrap();
        let cfg = HbvmConfig::new(1, 1, 0.1).unwrap().with_fp_max_iters(3);
        let err = integrate(pend.system.as_ref(), &cfg, &tables, &pend.initial.q, &pend.initial.p, 5).unwrap_err();
        assert_eq!(err.step, 0);
        assert!(matches!(err.error, Error::NotConverged { .. }));
    }

    #[test]
    fn integration_is_deterministic() {
        let pend = planar_pendulum();
        let tables = build_tables(3, 3).unwrap();
        let cfg = HbvmConfig::new(3, 3, 0.1).unwrap();
        let run = || {
            integrate(
                pend.system.as_ref(),
                &cfg,
                &tables,
                &pend.initial.q,
                &pend.initial.p,
                50,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
