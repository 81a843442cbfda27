#![allow(dead_code)]

use constrained_hbvm::problems::{polar_to_cartesian, BenchmarkProblem};
use constrained_hbvm::State;
use nalgebra::{DVector, Matrix3, Rotation3, Unit, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn unit_vector(rng: &mut StdRng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Removes the component of `p` along the constraint gradients (identity mass).
pub fn project_momentum(problem: &BenchmarkProblem, q: &DVector<f64>, p: DVector<f64>) -> DVector<f64> {
    let jac = problem.system.constraint_jacobian(q);
    if jac.ncols() == 0 {
        return p;
    }
    let gram = jac.transpose() * &jac;
    let coef = gram.lu().solve(&(jac.transpose() * &p)).expect("regular constraints");
    p - jac * coef
}

/// A random point of the constraint manifold with a tangent momentum.
pub fn random_consistent_state(problem: &BenchmarkProblem, rng: &mut StdRng) -> State {
    let q = match problem.name {
        "pendulum" => {
            let theta = rng.random_range(-3.0..3.0);
            let omega = rng.random_range(-2.0..2.0);
            let pt = polar_to_cartesian(theta, omega);
            return State::new(0.0, pt.q, pt.p);
        }
        "conical" => {
            let u = unit_vector(rng);
            DVector::from_column_slice(u.as_slice())
        }
        "modified" => {
            let x: f64 = rng.random_range(-0.7..0.7);
            let y: f64 = rng.random_range(-0.7..0.7);
            let z = (0.625 - x.powi(6) - y.powi(4)).sqrt();
            let z = if rng.random_bool(0.5) { z } else { -z };
            DVector::from_column_slice(&[x, y, z])
        }
        "tethered" => {
            let centre = unit_vector(rng) * rng.random_range(15.0..25.0);
            let axis = Unit::new_normalize(unit_vector(rng));
            let rot: Matrix3<f64> =
                Rotation3::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::TAU)).into();
            let r = 1.0 / 3f64.sqrt();
            let mut q = DVector::zeros(9);
            for i in 0..3 {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                let v = centre + rot * Vector3::new(r * a.cos(), r * a.sin(), 0.0);
                q.fixed_rows_mut::<3>(3 * i).copy_from(&v);
            }
            q
        }
        other => panic!("no sampler for {other}"),
    };
    let m = q.len();
    let p = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    let p = project_momentum(problem, &q, p);
    State::new(0.0, q, p)
}

/// Butcher tableau `(A, b)` of the s-stage Gauss method, s = 1, 2.
fn gauss_tableau(s: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    match s {
        1 => (vec![vec![0.5]], vec![1.0]),
        2 => {
            let r = 3f64.sqrt() / 6.0;
            (vec![vec![0.25, 0.25 - r], vec![0.25 + r, 0.25]], vec![0.5, 0.5])
        }
        _ => panic!("tableau only for s = 1, 2"),
    }
}

/// One Gauss collocation step of `θ' = ω, ω' = -sin θ`.
pub fn gauss_collocation_pendulum(theta: f64, omega: f64, h: f64, s: usize) -> (f64, f64) {
    let (a, b) = gauss_tableau(s);
    let f = |y: (f64, f64)| (y.1, -y.0.sin());
    let mut stages = vec![(theta, omega); s];
    for _ in 0..200 {
        let slopes: Vec<(f64, f64)> = stages.iter().map(|&y| f(y)).collect();
        let next: Vec<(f64, f64)> = (0..s)
            .map(|i| {
                let mut y = (theta, omega);
                for j in 0..s {
                    y.0 += h * a[i][j] * slopes[j].0;
                    y.1 += h * a[i][j] * slopes[j].1;
                }
                y
            })
            .collect();
        let change = next
            .iter()
            .zip(&stages)
            .map(|(x, y)| (x.0 - y.0).abs().max((x.1 - y.1).abs()))
            .fold(0.0, f64::max);
        stages = next;
        if change == 0.0 {
            break;
        }
    }
    let mut y = (theta, omega);
    for (i, &st) in stages.iter().enumerate() {
        let k = f(st);
        y.0 += h * b[i] * k.0;
        y.1 += h * b[i] * k.1;
    }
    y
}

/// Pearson correlation of `(x_i, y_i)`.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}
