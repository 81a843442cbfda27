//! Experiment runner behind the `hbvm` binary.
//!
//! ```text
//! hbvm list
//! hbvm integrate --problem tethered --k 6 --s 2 --h 0.1 --steps 10000 --out tethered.csv
//! hbvm integrate --problem conical --k 2 --s 2 --h T/100 --periods 100
//! hbvm converge --problem pendulum --s 1,2,3 --h0 0.1 --levels 9
//! hbvm converge --problem modified --k 3s --s 1,2,3
//! hbvm converge --problem conical --s 2 --h T/10,T/20,T/40 --periods 10
//! ```
//!
//! CSV goes to `--out` (or standard output for `integrate` without `--out`);
//! `converge` always prints the formatted table on standard output.
//! Exit codes: 0 success, 1 usage error, 2 numerical failure.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::analysis::{
    halving_schedule, run_ladder_with, steps_for_horizon, ConvergenceTable, LadderLevel, RateEstimate,
};
use crate::hbvm::{integrate, FixedPointSettings, HbvmConfig, Trajectory, DEFAULT_FP_MAX_ITERS, DEFAULT_FP_TOL};
use crate::model::{hamiltonian, hidden_constraints};
use crate::polybasis::build_tables;
use crate::problems::{all_problems, problem_by_name, BenchmarkProblem, ReferenceKind, ReferenceTrack, PROBLEM_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Horizon used when neither `--steps`, `--periods` nor `--t-end` is given.
pub const DEFAULT_T_END: f64 = 10.0;

#[derive(Debug, Parser)]
#[command(
    name = "hbvm",
    version,
    about = "HBVM(k,s) integrators for constrained Hamiltonian systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the benchmark problems.
    List,
    /// Integrate one problem and write the trajectory as CSV.
    Integrate(IntegrateArgs),
    /// Run a stepsize ladder and print the error table.
    Converge(ConvergeArgs),
}

/// Number of Gauss nodes: a fixed count (`6`) or a multiple of `s` (`3s`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeCount {
    Fixed(usize),
    TimesS(usize),
}

impl NodeCount {
    pub fn resolve(self, s: usize) -> usize {
        match self {
            NodeCount::Fixed(k) => k,
            NodeCount::TimesS(c) => c * s,
        }
    }
}

impl FromStr for NodeCount {
    type Err = String;

    fn from_str(text: &str) -> std::result::Result<Self, String> {
        let text = text.trim();
        let bad = || format!("expected a positive integer or a multiple of s such as `3s`, got `{text}`");
        match text.strip_suffix('s') {
            Some("") => Ok(NodeCount::TimesS(1)),
            Some(c) => c.parse().ok().filter(|&c| c > 0).map(NodeCount::TimesS).ok_or_else(bad),
            None => text
                .parse()
                .ok()
                .filter(|&k| k > 0)
                .map(NodeCount::Fixed)
                .ok_or_else(bad),
        }
    }
}

/// A stepsize: a number, or `T/n` for a fraction of the problem's period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Value(f64),
    PeriodFraction(usize),
}

impl StepSize {
    pub fn resolve(self, problem: &BenchmarkProblem) -> std::result::Result<f64, String> {
        match self {
            StepSize::Value(h) => Ok(h),
            StepSize::PeriodFraction(n) => problem
                .period
                .map(|t| t / n as f64)
                .ok_or_else(|| format!("problem `{}` has no period, so `T/{n}` is undefined", problem.name)),
        }
    }
}

impl FromStr for StepSize {
    type Err = String;

    fn from_str(text: &str) -> std::result::Result<Self, String> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix('T') {
            let n = match rest.strip_prefix('/') {
                Some(n) => n.trim().parse::<usize>().ok().filter(|&n| n > 0),
                None if rest.is_empty() => Some(1),
                None => None,
            };
            return n
                .map(StepSize::PeriodFraction)
                .ok_or_else(|| format!("expected `T/n` with a positive integer n, got `{text}`"));
        }
        match text.parse::<f64>() {
            Ok(h) if h > 0.0 && h.is_finite() => Ok(StepSize::Value(h)),
            _ => Err(format!("expected a positive stepsize or `T/n`, got `{text}`")),
        }
    }
}

#[derive(Debug, Args)]
pub struct HorizonArgs {
    /// Number of steps (for `converge`: steps at the first level).
    #[arg(long, conflicts_with_all = ["periods", "t_end"])]
    pub steps: Option<usize>,
    /// Horizon in periods of the exact motion.
    #[arg(long, conflicts_with = "t_end")]
    pub periods: Option<f64>,
    /// Horizon in time units [default: 10].
    #[arg(long)]
    pub t_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Fixed-point tolerance.
    #[arg(long, default_value_t = DEFAULT_FP_TOL)]
    pub fp_tol: f64,
    /// Fixed-point iteration cap per step.
    #[arg(long, default_value_t = DEFAULT_FP_MAX_ITERS)]
    pub fp_max_iters: usize,
    /// Print 17 significant digits instead of 5.
    #[arg(long)]
    pub full_precision: bool,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PROBLEM_NAMES))]
    pub problem: String,
    /// Gauss nodes: an integer or a multiple of s such as `3s` [default: s].
    #[arg(long)]
    pub k: Option<NodeCount>,
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    /// Stepsize, or `T/n` for periodic problems.
    #[arg(long)]
    pub h: StepSize,
    #[command(flatten)]
    pub horizon: HorizonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PROBLEM_NAMES))]
    pub problem: String,
    /// Gauss nodes: an integer or a multiple of s such as `3s` [default: s].
    #[arg(long)]
    pub k: Option<NodeCount>,
    /// One or more values of s; each gets its own table.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub s: Vec<usize>,
    /// Explicit decreasing stepsizes (`0.1,0.05` or `T/10,T/20`), instead of a halving ladder.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["h0", "levels"])]
    pub h: Vec<StepSize>,
    /// First stepsize of the halving ladder `h0 · 2^-n`.
    #[arg(long, default_value_t = 0.1)]
    pub h0: f64,
    /// Number of ladder levels.
    #[arg(long, default_value_t = 9)]
    pub levels: usize,
    #[command(flatten)]
    pub horizon: HorizonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// A failure that maps to an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let shown = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let sink: &mut dyn Write = if shown { stdout } else { stderr };
            let _ = write!(sink, "{}", e.render());
            return if shown { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let outcome = match &cli.command {
        Command::List => cmd_list(stdout).map_err(Failure::from),
        Command::Integrate(args) => cmd_integrate(args, stdout, stderr),
        Command::Converge(args) => cmd_converge(args, stdout, stderr),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Numerical(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_NUMERICAL
        }
    }
}

fn cmd_list(out: &mut dyn Write) -> io::Result<()> {
    writeln!(
        out,
        "{:<10} {:>3} {:>3}  {:<14} {:<6} period",
        "problem", "m", "nu", "reference", "norm"
    )?;
    for p in all_problems() {
        let period = p
            .period
            .map(|t| format!("{t:.10} (2^(3/4) pi)"))
            .unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{:<10} {:>3} {:>3}  {:<14} {:<6} {}",
            p.name,
            p.system.dim(),
            p.system.num_constraints(),
            p.reference.as_str(),
            p.solution_norm.as_str(),
            period
        )?;
    }
    Ok(())
}

/// Formats `x` as `d.dddde±XX` with `digits` significant digits.
pub fn format_sci(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let raw = format!("{:.*e}", digits.saturating_sub(1), x);
    let (mantissa, exp) = raw.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn number_format(full_precision: bool) -> impl Fn(f64) -> String {
    let digits = if full_precision { 17 } else { 5 };
    move |x| format_sci(x, digits)
}

fn lookup(name: &str) -> std::result::Result<BenchmarkProblem, Failure> {
    problem_by_name(name).ok_or_else(|| Failure::Usage(format!("unknown problem `{name}`")))
}

fn fixed_point(solver: &SolverArgs) -> FixedPointSettings {
    FixedPointSettings {
        tol: solver.fp_tol,
        max_iters: solver.fp_max_iters,
    }
}

/// Time span of the run given the stepsize of the first (or only) level.
fn horizon_time(horizon: &HorizonArgs, problem: &BenchmarkProblem, h: f64) -> std::result::Result<f64, Failure> {
    if let Some(n) = horizon.steps {
        return Ok(n as f64 * h);
    }
    if let Some(periods) = horizon.periods {
        let t = problem
            .period
            .ok_or_else(|| Failure::Usage(format!("problem `{}` has no period", problem.name)))?;
        return positive(periods * t, "--periods");
    }
    positive(horizon.t_end.unwrap_or(DEFAULT_T_END), "--t-end")
}

fn positive(x: f64, flag: &str) -> std::result::Result<f64, Failure> {
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Failure::Usage(format!("{flag} must be non-negative")))
    }
}

fn open_out(path: &PathBuf) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_integrate(args: &IntegrateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let problem = lookup(&args.problem)?;
    let sys = problem.system.as_ref();
    let s = args.s;
    let k = args.k.map_or(s, |k| k.resolve(s));
    let h = args.h.resolve(&problem).map_err(Failure::Usage)?;
    let n_steps = match args.horizon.steps {
        Some(n) => n,
        None => {
            let t = horizon_time(&args.horizon, &problem, h)?;
            steps_for_horizon(h, t).map_err(|e| Failure::Usage(e.to_string()))?
        }
    };
    let cfg = HbvmConfig::new(k, s, h)
        .map_err(|e| Failure::Usage(e.to_string()))?
        .with_policy_for(sys)
        .with_fixed_point(fixed_point(&args.solver));
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let tables = build_tables(s, k).map_err(|e| Failure::Usage(e.to_string()))?;

    let reference = match problem.reference {
        ReferenceKind::Analytic | ReferenceKind::AuxiliaryOde => Some(
            problem
                .sample_reference(k, s, h, n_steps)
                .map_err(|e| Failure::Numerical(format!("reference solution failed: {e}")))?,
        ),
        ReferenceKind::SelfRefined => None,
    };

    let (traj, failure) = match integrate(sys, &cfg, &tables, &problem.initial.q, &problem.initial.p, n_steps) {
        Ok(traj) => (traj, None),
        Err(f) => (f.partial.clone(), Some(f)),
    };

    let fmt = number_format(args.solver.full_precision);
    let mut file;
    let sink: &mut dyn Write = match &args.solver.out {
        Some(path) => {
            file = open_out(path)?;
            &mut file
        }
        None => stdout,
    };
    write_trajectory_csv(sink, &problem, &traj, reference.as_ref(), &fmt)?;
    sink.flush()?;

    match failure {
        None => Ok(()),
        Some(f) => {
            let t = f.partial.points.last().map_or(0.0, |pt| pt.t);
            let _ = writeln!(stderr, "failing step: {} (from t = {})", f.step, t);
            Err(Failure::Numerical(f.to_string()))
        }
    }
}

fn write_trajectory_csv(
    out: &mut dyn Write,
    problem: &BenchmarkProblem,
    traj: &Trajectory,
    reference: Option<&ReferenceTrack>,
    fmt: &dyn Fn(f64) -> String,
) -> io::Result<()> {
    let sys = problem.system.as_ref();
    let m = sys.dim();
    let nu = sys.num_constraints();

    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("q{i}")));
    header.extend((1..=m).map(|i| format!("p{i}")));
    header.extend((1..=nu).map(|i| format!("lambda{i}")));
    header.push("abs_dH".into());
    header.extend((1..=nu).map(|i| format!("abs_g{i}")));
    header.push("hidden".into());
    header.push("iters".into());
    if reference.is_some() {
        header.push("err_s".into());
        header.push("err_lambda".into());
    }
    writeln!(out, "{}", header.join(","))?;

    let h0 = traj.points.first().map_or(0.0, |pt| hamiltonian(sys, &pt.q, &pt.p));
    let vector = |row: &mut String, v: &DVector<f64>| {
        for x in v.iter() {
            let _ = write!(row, ",{}", fmt(*x));
        }
    };
    for (n, pt) in traj.points.iter().enumerate() {
        let mut row = fmt(pt.t);
        vector(&mut row, &pt.q);
        vector(&mut row, &pt.p);
        match &pt.lambda {
            Some(lambda) => vector(&mut row, lambda),
            None => row.push_str(&",".repeat(nu)),
        }
        let _ = write!(row, ",{}", fmt((hamiltonian(sys, &pt.q, &pt.p) - h0).abs()));
        vector(&mut row, &sys.constraints(&pt.q).abs());
        let _ = write!(row, ",{}", fmt(hidden_constraints(sys, &pt.q, &pt.p).lp_norm(1)));
        row.push(',');
        if let Some(iters) = pt.iters {
            let _ = write!(row, "{iters}");
        }
        if let Some(reference) = reference {
            let exact = &reference.points[n];
            let e_s = problem.solution_norm.of(&(&pt.q - &exact.q), &(&pt.p - &exact.p));
            let _ = write!(row, ",{},", fmt(e_s));
            if let (Some(lambda), Some(exact)) = (&pt.lambda, &exact.lambda) {
                row.push_str(&fmt((lambda - exact).amax()));
            }
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn cmd_converge(args: &ConvergeArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let problem = lookup(&args.problem)?;
    if args.s.is_empty() || args.s.contains(&0) {
        return Err(Failure::Usage("--s needs positive values".into()));
    }
    // Levels given as `T/n` are labelled by `n`, as in the periodic tables;
    // every other ladder is labelled by its position.
    let by_division = !args.h.is_empty() && args.h.iter().all(|step| matches!(step, StepSize::PeriodFraction(_)));
    let schedule: Vec<LadderLevel> = if args.h.is_empty() {
        if !(args.h0 > 0.0 && args.h0.is_finite()) || args.levels == 0 {
            return Err(Failure::Usage("--h0 must be positive and --levels at least 1".into()));
        }
        halving_schedule(args.h0, args.levels)
    } else {
        args.h
            .iter()
            .enumerate()
            .map(|(i, step)| {
                let h = step.resolve(&problem).map_err(Failure::Usage)?;
                let label = match step {
                    StepSize::PeriodFraction(n) if by_division => *n,
                    _ => i,
                };
                Ok(LadderLevel { label, h })
            })
            .collect::<std::result::Result<Vec<_>, Failure>>()?
    };
    let horizon = horizon_time(&args.horizon, &problem, schedule[0].h)?;
    let settings = fixed_point(&args.solver);

    let mut tables = Vec::with_capacity(args.s.len());
    for &s in &args.s {
        let k = args.k.map_or(s, |k| k.resolve(s));
        let table =
            run_ladder_with(&problem, k, s, &schedule, horizon, settings).map_err(|e| Failure::Usage(e.to_string()))?;
        let failed = table.failure.is_some();
        tables.push(table);
        if failed {
            break;
        }
    }

    let fmt = number_format(args.solver.full_precision);
    for table in &tables {
        write_table_text(stdout, table, &fmt, args.solver.full_precision)?;
    }
    if let Some(path) = &args.solver.out {
        let mut file = open_out(path)?;
        write_table_csv(&mut file, &tables, &fmt, args.solver.full_precision)?;
        file.flush()?;
    }
    stdout.flush()?;

    match tables.iter().find_map(|t| t.failure.as_ref().map(|f| (t, f))) {
        None => Ok(()),
        Some((table, failure)) => {
            let _ = writeln!(
                stderr,
                "failing level: n = {} (h = {}) of HBVM({},{})",
                failure.level.label, failure.level.h, table.k, table.s
            );
            Err(Failure::Numerical(failure.error.to_string()))
        }
    }
}

fn format_rate(rate: Option<RateEstimate>, full_precision: bool) -> Option<String> {
    rate.filter(|r| r.reliable && r.value.is_finite()).map(|r| {
        if full_precision {
            format_sci(r.value, 17)
        } else {
            format!("{:.2}", r.value)
        }
    })
}

fn write_table_text(
    out: &mut dyn Write,
    table: &ConvergenceTable,
    fmt: &dyn Fn(f64) -> String,
    full_precision: bool,
) -> io::Result<()> {
    let w = fmt(1.0).len().max(10);
    let rw = if full_precision { w } else { 5 };
    writeln!(out, "{}: HBVM({},{})", table.problem, table.k, table.s)?;
    writeln!(
        out,
        "{:>4}  {:>w$}  {:>rw$}  {:>w$}  {:>rw$}  {:>w$}  {:>w$}  {:>w$}  {:>rw$}",
        "n", "e_s", "rate", "e_lambda", "rate", "e_H", "e_g", "e_hc", "rate"
    )?;
    let dash = || "--".to_string();
    for row in &table.rows {
        let r = &row.report;
        writeln!(
            out,
            "{:>4}  {:>w$}  {:>rw$}  {:>w$}  {:>rw$}  {:>w$}  {:>w$}  {:>w$}  {:>rw$}",
            row.level.label,
            fmt(r.e_s),
            format_rate(row.rate_s, full_precision).unwrap_or_else(dash),
            r.e_lambda.map(fmt).unwrap_or_else(dash),
            format_rate(row.rate_lambda, full_precision).unwrap_or_else(dash),
            fmt(r.e_h),
            fmt(r.e_g),
            fmt(r.e_hc),
            format_rate(row.rate_hc, full_precision).unwrap_or_else(dash),
        )?;
    }
    if let Some(f) = &table.failure {
        writeln!(out, "{:>4}  failed: {}", f.level.label, f.error)?;
    }
    writeln!(out)
}

fn write_table_csv(
    out: &mut dyn Write,
    tables: &[ConvergenceTable],
    fmt: &dyn Fn(f64) -> String,
    full_precision: bool,
) -> io::Result<()> {
    writeln!(out, "k,s,n,h,e_s,rate_s,e_lambda,rate_lambda,e_H,e_g,e_hc,rate_hc")?;
    for table in tables {
        for row in &table.rows {
            let r = &row.report;
            let rate = |x| format_rate(x, full_precision).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                table.k,
                table.s,
                row.level.label,
                fmt(row.level.h),
                fmt(r.e_s),
                rate(row.rate_s),
                r.e_lambda.map(fmt).unwrap_or_default(),
                rate(row.rate_lambda),
                fmt(r.e_h),
                fmt(r.e_g),
                fmt(r.e_hc),
                rate(row.rate_hc),
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("hbvm").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn sci_format_matches_table_style() {
        assert_eq!(format_sci(2.57e-2, 5), "2.5700e-02");
        assert_eq!(format_sci(1.1543, 5), "1.1543e+00");
        assert_eq!(format_sci(0.0, 5), "0.0000e+00");
        assert_eq!(format_sci(-3.5e-120, 3), "-3.50e-120");
        assert_eq!(format_sci(0.1, 17), "1.0000000000000001e-01");
    }

    #[test]
    fn node_count_parsing() {
        assert_eq!("6".parse::<NodeCount>(), Ok(NodeCount::Fixed(6)));
        assert_eq!("3s".parse::<NodeCount>(), Ok(NodeCount::TimesS(3)));
        assert_eq!("s".parse::<NodeCount>(), Ok(NodeCount::TimesS(1)));
        assert_eq!(NodeCount::TimesS(3).resolve(2), 6);
        assert!("0".parse::<NodeCount>().is_err());
        assert!("x".parse::<NodeCount>().is_err());
        assert!("-2s".parse::<NodeCount>().is_err());
    }

    #[test]
    fn step_size_parsing() {
        assert_eq!("0.1".parse::<StepSize>(), Ok(StepSize::Value(0.1)));
        assert_eq!("T/20".parse::<StepSize>(), Ok(StepSize::PeriodFraction(20)));
        assert_eq!("T".parse::<StepSize>(), Ok(StepSize::PeriodFraction(1)));
        assert!("T/0".parse::<StepSize>().is_err());
        assert!("-0.1".parse::<StepSize>().is_err());
        assert!("Tx".parse::<StepSize>().is_err());
        let pendulum = problem_by_name("pendulum").unwrap();
        assert!(StepSize::PeriodFraction(10).resolve(&pendulum).is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(
            run_capture(&["integrate", "--problem", "nope", "--h", "0.1"]).0,
            EXIT_USAGE
        );
        assert_eq!(run_capture(&["integrate", "--problem", "pendulum"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["bogus"]).0, EXIT_USAGE);
        let (code, _, err) = run_capture(&["integrate", "--problem", "pendulum", "--h", "T/10", "--steps", "1"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("no period"));
        let (code, _, _) = run_capture(&[
            "integrate",
            "--problem",
            "pendulum",
            "--k",
            "1",
            "--s",
            "2",
            "--h",
            "0.1",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("integrate"));
    }

    #[test]
    fn zero_steps_writes_initial_row_only() {
        let (code, out, _) = run_capture(&[
            "integrate",
            "--problem",
            "pendulum",
            "--s",
            "1",
            "--h",
            "0.1",
            "--steps",
            "0",
        ]);
        assert_eq!(code, EXIT_OK);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("t,q1,q2,p1,p2,lambda1,abs_dH,abs_g1,hidden,iters,err_s,err_lambda"));
        assert!(lines[1].starts_with("0.0000e+00,"));
    }
}
