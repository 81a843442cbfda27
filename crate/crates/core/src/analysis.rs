//! Error metrics, convergence-rate estimates and convergence tables.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hbvm::{integrate, FixedPointSettings, HbvmConfig, Trajectory};
use crate::model::{hamiltonian, hidden_constraints};
use crate::polybasis::build_tables;
use crate::problems::{BenchmarkProblem, ReferenceTrack, SolutionSampling};

/// Errors at or below this level are round-off; rates computed from them are unreliable.
pub const RATE_FLOOR: f64 = 1e-13;

/// Max-over-mesh errors of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    pub n_steps: usize,
    /// `max_n ‖(q_n, p_n) - (q(t_n), p(t_n))‖` in the problem's solution norm,
    /// over the mesh points selected by its solution sampling.
    pub e_s: f64,
    /// `max_n ‖λ_n - λ(q(t_n), p(t_n))‖∞`, absent without a multiplier reference.
    pub e_lambda: Option<f64>,
    /// `max_n |H(q_n, p_n) - H(q_0, p_0)|`
    pub e_h: f64,
    /// `max_n ‖g(q_n)‖∞`
    pub e_g: f64,
    /// `max_n ‖∇g(q_n)ᵀ M⁻¹ p_n‖₁`
    pub e_hc: f64,
}

/// Compares `traj` with `reference`, sampled on the same mesh.
pub fn compute_errors(
    traj: &Trajectory,
    problem: &BenchmarkProblem,
    reference: &ReferenceTrack,
) -> Result<ErrorReport> {
    if reference.points.len() < traj.points.len() {
        return Err(Error::Dimension(format!(
            "reference has {} mesh points, trajectory has {}",
            reference.points.len(),
            traj.points.len()
        )));
    }
    let sys = problem.system.as_ref();
    let norm = problem.solution_norm;
    let sampled = |t: f64| match (problem.solution_sampling, problem.period) {
        (SolutionSampling::WholePeriods, Some(period)) => {
            let turns = t / period;
            (turns - turns.round()).abs() <= 1e-9 * turns.abs().max(1.0)
        }
        _ => true,
    };
    let first = &traj.points[0];
    let h0 = hamiltonian(sys, &first.q, &first.p);

    let mut e_s = 0.0f64;
    let mut e_h = 0.0f64;
    let mut e_g = 0.0f64;
    let mut e_hc = 0.0f64;
    let mut e_lambda = Some(0.0f64);
    for (pt, reference) in traj.points.iter().zip(&reference.points) {
        if sampled(pt.t) {
            e_s = e_s.max(norm.of(&(&pt.q - &reference.q), &(&pt.p - &reference.p)));
        }
        e_h = e_h.max((hamiltonian(sys, &pt.q, &pt.p) - h0).abs());
        e_g = e_g.max(sys.constraints(&pt.q).amax());
        e_hc = e_hc.max(hidden_constraints(sys, &pt.q, &pt.p).lp_norm(1));
        if let Some(lam) = &pt.lambda {
            e_lambda = match (e_lambda, &reference.lambda) {
                (Some(acc), Some(exact)) => Some(acc.max((lam - exact).amax())),
                _ => None,
            };
        }
    }
    Ok(ErrorReport {
        h: traj.h,
        n_steps: traj.points.len() - 1,
        e_s,
        e_lambda,
        e_h,
        e_g,
        e_hc,
    })
}

/// Integrates `problem` with HBVM(k,s) and scores the run against its reference.
pub fn evaluate_run(
    problem: &BenchmarkProblem,
    k: usize,
    s: usize,
    h: f64,
    n_steps: usize,
) -> Result<(Trajectory, ErrorReport)> {
    evaluate_run_with(problem, k, s, h, n_steps, FixedPointSettings::default())
}

/// [`evaluate_run`] with explicit fixed-point settings for the run (the
/// reference keeps the defaults).
pub fn evaluate_run_with(
    problem: &BenchmarkProblem,
    k: usize,
    s: usize,
    h: f64,
    n_steps: usize,
    fixed_point: FixedPointSettings,
) -> Result<(Trajectory, ErrorReport)> {
    let sys = problem.system.as_ref();
    let tables = build_tables(s, k)?;
    let cfg = HbvmConfig::new(k, s, h)?
        .with_policy_for(sys)
        .with_fixed_point(fixed_point);
    cfg.validate()?;
    let traj = integrate(sys, &cfg, &tables, &problem.initial.q, &problem.initial.p, n_steps).map_err(|f| f.error)?;
    let reference = problem.sample_reference(k, s, h, n_steps)?;
    let report = compute_errors(&traj, problem, &reference)?;
    Ok((traj, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub value: f64,
    /// False when the finer error sits at round-off level.
    pub reliable: bool,
}

/// Observed order `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn estimate_rate(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Result<RateEstimate> {
    if !(h_fine > 0.0 && h_coarse > h_fine) {
        return Err(Error::InvalidConfig(format!(
            "rate needs 0 < h_fine < h_coarse, got {h_fine} and {h_coarse}"
        )));
    }
    if !(e_coarse > 0.0 && e_fine > 0.0) {
        return Ok(RateEstimate {
            value: f64::NAN,
            reliable: false,
        });
    }
    Ok(RateEstimate {
        value: (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln(),
        reliable: e_fine >= RATE_FLOOR,
    })
}

/// One stepsize of a ladder, with the identifier printed in the `n` column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderLevel {
    pub label: usize,
    pub h: f64,
}

/// `h = h0 · 2^{-n}`, `n = 0..levels`.
pub fn halving_schedule(h0: f64, levels: usize) -> Vec<LadderLevel> {
    (0..levels)
        .map(|n| LadderLevel {
            label: n,
            h: h0 * 0.5f64.powi(n as i32),
        })
        .collect()
}

/// `h = period / n` for each `n` in `divisions`.
pub fn period_schedule(period: f64, divisions: &[usize]) -> Vec<LadderLevel> {
    divisions
        .iter()
        .map(|&n| LadderLevel {
            label: n,
            h: period / n as f64,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub level: LadderLevel,
    pub report: ErrorReport,
    pub rate_s: Option<RateEstimate>,
    pub rate_lambda: Option<RateEstimate>,
    pub rate_hc: Option<RateEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderFailure {
    pub level: LadderLevel,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub problem: String,
    pub k: usize,
    pub s: usize,
    pub rows: Vec<ConvergenceRow>,
    /// First failing level; the ladder stops there.
    pub failure: Option<LadderFailure>,
}

/// Number of steps of size `h` covering `[0, horizon]`.
pub fn steps_for_horizon(h: f64, horizon: f64) -> Result<usize> {
    let n = (horizon / h).round();
    if n.is_nan() || n < 0.0 || (n * h - horizon).abs() > 1e-9 * horizon.abs().max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "horizon {horizon} is not a whole number of steps of size {h}"
        )));
    }
    Ok(n as usize)
}

/// Runs every level of `schedule` over `[0, horizon]` and fills the rate columns.
///
/// Levels run concurrently; rows are assembled in schedule order.
pub fn run_ladder(
    problem: &BenchmarkProblem,
    k: usize,
    s: usize,
    schedule: &[LadderLevel],
    horizon: f64,
) -> Result<ConvergenceTable> {
    run_ladder_with(problem, k, s, schedule, horizon, FixedPointSettings::default())
}

/// [`run_ladder`] with explicit fixed-point settings.
pub fn run_ladder_with(
    problem: &BenchmarkProblem,
    k: usize,
    s: usize,
    schedule: &[LadderLevel],
    horizon: f64,
    fixed_point: FixedPointSettings,
) -> Result<ConvergenceTable> {
    if schedule.is_empty() {
        return Err(Error::InvalidConfig("empty stepsize schedule".into()));
    }
    if schedule.windows(2).any(|w| w[1].h >= w[0].h) {
        return Err(Error::InvalidConfig("stepsize schedule must be decreasing".into()));
    }
    build_tables(s, k)?;
    HbvmConfig::new(k, s, schedule[0].h)?
        .with_fixed_point(fixed_point)
        .validate()?;
    let steps = schedule
        .iter()
        .map(|lvl| steps_for_horizon(lvl.h, horizon))
        .collect::<Result<Vec<_>>>()?;

    let outcomes: Vec<Result<ErrorReport>> = schedule
        .par_iter()
        .zip(steps.par_iter())
        .map(|(lvl, &n)| evaluate_run_with(problem, k, s, lvl.h, n, fixed_point).map(|(_, report)| report))
        .collect();

    let mut table = ConvergenceTable {
        problem: problem.name.to_string(),
        k,
        s,
        rows: Vec::with_capacity(schedule.len()),
        failure: None,
    };
    for (lvl, outcome) in schedule.iter().zip(outcomes) {
        let report = match outcome {
            Ok(report) => report,
            Err(error) => {
                table.failure = Some(LadderFailure { level: *lvl, error });
                break;
            }
        };
        let (rate_s, rate_lambda, rate_hc) = match table.rows.last() {
            None => (None, None, None),
            Some(prev) => {
                let rate = |a: f64, b: f64| estimate_rate(a, b, prev.level.h, lvl.h).ok();
                (
                    rate(prev.report.e_s, report.e_s),
                    match (prev.report.e_lambda, report.e_lambda) {
                        (Some(a), Some(b)) => rate(a, b),
                        _ => None,
                    },
                    rate(prev.report.e_hc, report.e_hc),
                )
            }
        };
        table.rows.push(ConvergenceRow {
            level: *lvl,
            report,
            rate_s,
            rate_lambda,
            rate_hc,
        });
    }
    Ok(table)
}

/// Guard for self-refined references: the change of the reference when its
/// stepsize is halved from `h/refinement` to `h/(2 refinement)`, relative to `e_s`.
pub fn reference_refinement_ratio(
    problem: &BenchmarkProblem,
    k: usize,
    s: usize,
    h: f64,
    n_steps: usize,
    refinement: usize,
    e_s: f64,
) -> Result<f64> {
    let coarse = problem.self_refined_reference(k, s, h, n_steps, refinement)?;
    let fine = problem.self_refined_reference(k, s, h, n_steps, 2 * refinement)?;
    let norm = problem.solution_norm;
    let change = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| norm.of(&(&a.q - &b.q), &(&a.p - &b.p)))
        .fold(0.0, f64::max);
    Ok(change / e_s)
}
