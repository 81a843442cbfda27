//! Benchmark problems with consistent initial data and reference solutions.
//!
//! All masses, lengths, the gravity acceleration and the gravitational
//! constant are normalized to one; every mass matrix is the identity.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::hbvm::{integrate, HbvmConfig};
use crate::model::{lambda_exact, ConstrainedHamiltonianSystem, State};
use crate::polybasis::build_tables;

/// Refinement factor of the polar-coordinate pendulum reference.
pub const AUX_REFINEMENT: usize = 10;
/// Polynomial/node counts of the unconstrained method used for the polar pendulum.
pub const AUX_METHOD: (usize, usize) = (12, 6);
/// Default refinement factor of self-refined references. With `h/2` the
/// measured `e_s` is the difference between the runs at `h` and `h/2`, which
/// for an order-2 method is three quarters of the true error.
pub const SELF_REFINEMENT: usize = 2;

/// How a problem's reference trajectory is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Closed-form solution.
    Analytic,
    /// An equivalent unconstrained ODE integrated to high accuracy.
    AuxiliaryOde,
    /// The same method on a finer mesh.
    SelfRefined,
}

impl ReferenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceKind::Analytic => "analytic",
            ReferenceKind::AuxiliaryOde => "auxiliary_ode",
            ReferenceKind::SelfRefined => "self_refined",
        }
    }
}

/// Norm applied to the state error `(q_n - q(t_n), p_n - p(t_n))` at each mesh point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionNorm {
    /// Largest component in absolute value.
    MaxAbs,
    /// Sum of the absolute values of all components.
    SumAbs,
}

impl SolutionNorm {
    pub fn of(self, dq: &DVector<f64>, dp: &DVector<f64>) -> f64 {
        match self {
            SolutionNorm::MaxAbs => dq.amax().max(dp.amax()),
            SolutionNorm::SumAbs => dq.iter().chain(dp.iter()).map(|x| x.abs()).sum(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolutionNorm::MaxAbs => "max",
            SolutionNorm::SumAbs => "sum",
        }
    }
}

/// Mesh points at which the state error enters `e_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionSampling {
    EveryStep,
    /// Only `t_n` that are whole multiples of the problem's period.
    WholePeriods,
}

/// Reference values at one mesh point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    /// `λ(q(t), p(t))`, when the problem provides it.
    pub lambda: Option<DVector<f64>>,
}

/// Reference solution sampled on the mesh `t_n = n h`, `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrack {
    pub kind: ReferenceKind,
    pub h: f64,
    pub points: Vec<ReferencePoint>,
}

pub struct BenchmarkProblem {
    pub name: &'static str,
    pub system: Arc<dyn ConstrainedHamiltonianSystem>,
    pub initial: State,
    pub reference: ReferenceKind,
    /// Refinement factor used when `reference` is [`ReferenceKind::SelfRefined`].
    pub self_refinement: usize,
    pub solution_norm: SolutionNorm,
    pub solution_sampling: SolutionSampling,
    /// Period of the exact motion, when it is periodic.
    pub period: Option<f64>,
}

impl std::fmt::Debug for BenchmarkProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BenchmarkProblem")
            .field("name", &self.name)
            .field("m", &self.system.dim())
            .field("nu", &self.system.num_constraints())
            .field("reference", &self.reference)
            .field("self_refinement", &self.self_refinement)
            .field("solution_norm", &self.solution_norm)
            .field("solution_sampling", &self.solution_sampling)
            .field("period", &self.period)
            .finish()
    }
}

type AnalyticSolution = fn(f64) -> (DVector<f64>, DVector<f64>);

impl BenchmarkProblem {
    /// Same problem with a different self-refinement factor (at least 2).
    pub fn with_self_refinement(mut self, refinement: usize) -> Self {
        self.self_refinement = refinement.max(2);
        self
    }

    /// Closed-form `t ↦ (q(t), p(t))`, for problems that have one.
    pub fn analytic_reference(&self) -> Option<AnalyticSolution> {
        match self.name {
            "conical" => Some(conical_exact),
            _ => None,
        }
    }

    /// Samples the reference solution on `t_n = n h`, `n = 0..=n_steps`.
    ///
    /// `(k, s)` selects the method used by self-refined references.
    pub fn sample_reference(&self, k: usize, s: usize, h: f64, n_steps: usize) -> Result<ReferenceTrack> {
        let points = match self.reference {
            ReferenceKind::Analytic => {
                let exact = self.analytic_reference().expect("analytic problems provide a solution");
                let lambda = DVector::from_element(1, CONICAL_LAMBDA);
                (0..=n_steps)
                    .map(|n| {
                        let (q, p) = exact(n as f64 * h);
                        ReferencePoint {
                            q,
                            p,
                            lambda: Some(lambda.clone()),
                        }
                    })
                    .collect()
            }
            ReferenceKind::AuxiliaryOde => polar_pendulum_reference(h, n_steps)?,
            ReferenceKind::SelfRefined => self.self_refined_reference(k, s, h, n_steps, self.self_refinement)?,
        };
        Ok(ReferenceTrack {
            kind: self.reference,
            h,
            points,
        })
    }

    /// Runs HBVM(k,s) at `h / refinement` and keeps every `refinement`-th point.
    ///
    /// The reference multiplier at `t_n` is the fine run's multiplier of the
    /// step leaving `t_n`; at the final point it is `λ(q, p)`.
    pub fn self_refined_reference(
        &self,
        k: usize,
        s: usize,
        h: f64,
        n_steps: usize,
        refinement: usize,
    ) -> Result<Vec<ReferencePoint>> {
        let sys = self.system.as_ref();
        let tables = build_tables(s, k)?;
        let cfg = HbvmConfig::new(k, s, h / refinement as f64)?.with_policy_for(sys);
        let fine = integrate(
            sys,
            &cfg,
            &tables,
            &self.initial.q,
            &self.initial.p,
            n_steps * refinement,
        )
        .map_err(|f| f.error)?;
        fine.points
            .iter()
            .step_by(refinement)
            .map(|pt| {
                let lambda = match &pt.lambda {
                    Some(lambda) => lambda.clone(),
                    None => lambda_exact(sys, &pt.q, &pt.p)?,
                };
                Ok(ReferencePoint {
                    q: pt.q.clone(),
                    p: pt.p.clone(),
                    lambda: Some(lambda),
                })
            })
            .collect()
    }
}

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// `x² + y² - 1` style constraint `qᵀq - 1` under the potential `qᵀe_last`.
struct SpherePendulum {
    dim: usize,
}

impl ConstrainedHamiltonianSystem for SpherePendulum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_constraints(&self) -> usize {
        1
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        q[self.dim - 1]
    }

    fn grad_potential(&self, _q: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        g[self.dim - 1] = 1.0;
        g
    }

    fn constraints(&self, q: &DVector<f64>) -> DVector<f64> {
        dv(&[q.dot(q) - 1.0])
    }

    fn constraint_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.dim, 1, (q * 2.0).as_slice())
    }

    fn constraint_hessian_bilinear(&self, _q: &DVector<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
        Some(dv(&[2.0 * w.dot(w)]))
    }
}

/// Planar pendulum in Cartesian coordinates: `H = ½pᵀp + y`, `g = qᵀq - 1`.
pub fn planar_pendulum() -> BenchmarkProblem {
    BenchmarkProblem {
        name: "pendulum",
        system: Arc::new(SpherePendulum { dim: 2 }),
        initial: State::new(0.0, dv(&[0.0, -1.0]), dv(&[1.0, 0.0])),
        reference: ReferenceKind::AuxiliaryOde,
        self_refinement: SELF_REFINEMENT,
        solution_norm: SolutionNorm::SumAbs,
        solution_sampling: SolutionSampling::EveryStep,
        period: None,
    }
}

/// Pendulum angle from the downward vertical: `H = ½ω² - cos θ`, unconstrained.
pub struct PolarPendulum;

impl ConstrainedHamiltonianSystem for PolarPendulum {
    fn dim(&self) -> usize {
        1
    }

    fn num_constraints(&self) -> usize {
        0
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        -q[0].cos()
    }

    fn grad_potential(&self, q: &DVector<f64>) -> DVector<f64> {
        dv(&[q[0].sin()])
    }

    fn constraints(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn constraint_jacobian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 0)
    }
}

/// Maps `(θ, θ̇)` to the Cartesian pendulum state and its multiplier.
pub fn polar_to_cartesian(theta: f64, omega: f64) -> ReferencePoint {
    let (sin, cos) = theta.sin_cos();
    ReferencePoint {
        q: dv(&[sin, -cos]),
        p: dv(&[omega * cos, omega * sin]),
        lambda: Some(dv(&[0.5 * (omega * omega + cos)])),
    }
}

fn polar_pendulum_reference(h: f64, n_steps: usize) -> Result<Vec<ReferencePoint>> {
    let (k, s) = AUX_METHOD;
    let tables = build_tables(s, k)?;
    let cfg = HbvmConfig::new(k, s, h / AUX_REFINEMENT as f64)?.with_policy_for(&PolarPendulum);
    let fine = integrate(
        &PolarPendulum,
        &cfg,
        &tables,
        &dv(&[0.0]),
        &dv(&[1.0]),
        n_steps * AUX_REFINEMENT,
    )
    .map_err(|f| f.error)?;
    Ok(fine
        .points
        .iter()
        .step_by(AUX_REFINEMENT)
        .map(|pt| polar_to_cartesian(pt.q[0], pt.p[0]))
        .collect())
}

const CONICAL_LAMBDA: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Period `2^{3/4} π` of the conical pendulum.
pub fn conical_period() -> f64 {
    2f64.powf(0.75) * std::f64::consts::PI
}

/// Uniform circular motion at height `-2^{-1/2}` with radius `2^{-1/2}`.
fn conical_exact(t: f64) -> (DVector<f64>, DVector<f64>) {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let omega = 2f64.powf(0.25);
    let (sin, cos) = (omega * t).sin_cos();
    (
        dv(&[r * cos, r * sin, -r]),
        dv(&[-r * omega * sin, r * omega * cos, 0.0]),
    )
}

/// Spherical pendulum started on a horizontal circular orbit; its rod tension is constant.
pub fn conical_pendulum() -> BenchmarkProblem {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    BenchmarkProblem {
        name: "conical",
        system: Arc::new(SpherePendulum { dim: 3 }),
        initial: State::new(0.0, dv(&[r, 0.0, -r]), dv(&[0.0, 2f64.powf(-0.25), 0.0])),
        reference: ReferenceKind::Analytic,
        self_refinement: SELF_REFINEMENT,
        solution_norm: SolutionNorm::MaxAbs,
        solution_sampling: SolutionSampling::WholePeriods,
        period: Some(conical_period()),
    }
}

/// `H = ½pᵀp + z⁴`, `g = x⁶ + y⁴ + z² - 0.625`.
struct ModifiedPendulum;

impl ConstrainedHamiltonianSystem for ModifiedPendulum {
    fn dim(&self) -> usize {
        3
    }

    fn num_constraints(&self) -> usize {
        1
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        q[2].powi(4)
    }

    fn grad_potential(&self, q: &DVector<f64>) -> DVector<f64> {
        dv(&[0.0, 0.0, 4.0 * q[2].powi(3)])
    }

    fn constraints(&self, q: &DVector<f64>) -> DVector<f64> {
        dv(&[q[0].powi(6) + q[1].powi(4) + q[2] * q[2] - 0.625])
    }

    fn constraint_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 1, &[6.0 * q[0].powi(5), 4.0 * q[1].powi(3), 2.0 * q[2]])
    }

    fn constraint_hessian_bilinear(&self, q: &DVector<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
        Some(dv(&[30.0 * q[0].powi(4) * w[0] * w[0]
            + 12.0 * q[1] * q[1] * w[1] * w[1]
            + 2.0 * w[2] * w[2]]))
    }
}

/// Polynomial Hamiltonian and constraint of degrees 4 and 6, started from the conical data.
pub fn modified_pendulum() -> BenchmarkProblem {
    let cone = conical_pendulum();
    BenchmarkProblem {
        name: "modified",
        system: Arc::new(ModifiedPendulum),
        initial: cone.initial,
        reference: ReferenceKind::SelfRefined,
        self_refinement: SELF_REFINEMENT,
        solution_norm: SolutionNorm::MaxAbs,
        solution_sampling: SolutionSampling::EveryStep,
        period: None,
    }
}

/// Three unit point masses joined pairwise by unit tethers, orbiting a unit
/// central mass at the origin. `q = (q₁, q₂, q₃)`, each in `ℝ³`.
struct TetheredSatellites;

impl TetheredSatellites {
    fn body(q: &DVector<f64>, i: usize) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(q[3 * i], q[3 * i + 1], q[3 * i + 2])
    }
}

/// Constraint `c` couples bodies `(a, b)` through `|q_a - q_b|² - 1`.
const TETHERS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

impl ConstrainedHamiltonianSystem for TetheredSatellites {
    fn dim(&self) -> usize {
        9
    }

    fn num_constraints(&self) -> usize {
        3
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        -(0..3).map(|i| 1.0 / Self::body(q, i).norm()).sum::<f64>()
    }

    fn grad_potential(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(9);
        for i in 0..3 {
            let b = Self::body(q, i);
            let r = b.norm();
            g.fixed_rows_mut::<3>(3 * i).copy_from(&(b / (r * r * r)));
        }
        g
    }

    fn constraints(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            3,
            TETHERS
                .iter()
                .map(|&(a, b)| (Self::body(q, a) - Self::body(q, b)).norm_squared() - 1.0),
        )
    }

    fn constraint_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(9, 3);
        for (c, &(a, b)) in TETHERS.iter().enumerate() {
            let d = (Self::body(q, a) - Self::body(q, b)) * 2.0;
            jac.fixed_view_mut::<3, 1>(3 * a, c).copy_from(&d);
            jac.fixed_view_mut::<3, 1>(3 * b, c).copy_from(&(-d));
        }
        jac
    }

    fn constraint_hessian_bilinear(&self, _q: &DVector<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            3,
            TETHERS
                .iter()
                .map(|&(a, b)| 2.0 * (Self::body(w, a) - Self::body(w, b)).norm_squared()),
        ))
    }
}

/// Equilateral tethered triangle at height 20 with zero initial energy.
pub fn tethered_satellites() -> BenchmarkProblem {
    let z0 = 20.0;
    let drop = 3f64.sqrt() / 2.0;
    let v0 = (2.0 * (2.0 / 400.25f64.sqrt() + 1.0 / (z0 - drop))).sqrt();
    BenchmarkProblem {
        name: "tethered",
        system: Arc::new(TetheredSatellites),
        initial: State::new(
            0.0,
            dv(&[0.0, 0.5, z0, 0.0, -0.5, z0, 0.0, 0.0, z0 - drop]),
            dv(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, v0, 0.0, 0.0]),
        ),
        reference: ReferenceKind::SelfRefined,
        self_refinement: SELF_REFINEMENT,
        solution_norm: SolutionNorm::MaxAbs,
        solution_sampling: SolutionSampling::EveryStep,
        period: None,
    }
}

/// Registry names, in listing order.
pub const PROBLEM_NAMES: [&str; 4] = ["pendulum", "conical", "modified", "tethered"];

pub fn problem_by_name(name: &str) -> Option<BenchmarkProblem> {
    match name {
        "pendulum" => Some(planar_pendulum()),
        "conical" => Some(conical_pendulum()),
        "modified" => Some(modified_pendulum()),
        "tethered" => Some(tethered_satellites()),
        _ => None,
    }
}

pub fn all_problems() -> Vec<BenchmarkProblem> {
    PROBLEM_NAMES
        .iter()
        .map(|n| problem_by_name(n).expect("registry names resolve"))
        .collect()
}
