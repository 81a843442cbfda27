//! Shifted orthonormal Legendre polynomials on `[0, 1]`, Gauss-Legendre
//! quadrature, and the structural matrices of the discrete step equations.
//!
//! The basis satisfies `∫₀¹ P_i P_j = δ_ij`, so `P_j(c) = √(2j+1) L_j(2c - 1)`
//! where `L_j` is the classical Legendre polynomial on `[-1, 1]`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest polynomial count `s` and node count `k` accepted by [`build_tables`].
pub const MAX_ORDER: usize = 30;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;
const EXACTNESS_TOL: f64 = 1e-13;

/// `ξ_j = 1 / (2 √|4j² - 1|)`.
pub fn xi(j: usize) -> f64 {
    let j = j as f64;
    0.5 / (4.0 * j * j - 1.0).abs().sqrt()
}

/// Coefficient `β_n = n / √(4n² - 1)` of the recurrence
/// `(2c - 1) P_n = β_{n+1} P_{n+1} + β_n P_{n-1}`.
fn beta(n: usize) -> f64 {
    let nf = n as f64;
    nf / (4.0 * nf * nf - 1.0).sqrt()
}

/// Evaluates `P_0(c), …, P_n(c)` into `out` (length `n + 1`).
fn eval_all(n: usize, c: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n + 1);
    let x = 2.0 * c - 1.0;
    out[0] = 1.0;
    if n == 0 {
        return;
    }
    out[1] = 3f64.sqrt() * x;
    for j in 1..n {
        out[j + 1] = (x * out[j] - beta(j) * out[j - 1]) / beta(j + 1);
    }
}

/// Value of the shifted orthonormal Legendre polynomial `P_j` at `c`.
pub fn eval_p(j: usize, c: f64) -> f64 {
    let mut vals = vec![0.0; j + 1];
    eval_all(j, c, &mut vals);
    vals[j]
}

/// `∫₀^c P_j(x) dx`.
///
/// Uses `∫₀^c P_0 = c` and, for `j ≥ 1`, `∫₀^c P_j = ξ_{j+1} P_{j+1}(c) - ξ_j P_{j-1}(c)`.
pub fn eval_int_p(j: usize, c: f64) -> f64 {
    if j == 0 {
        return c;
    }
    let mut vals = vec![0.0; j + 2];
    eval_all(j + 1, c, &mut vals);
    xi(j + 1) * vals[j + 1] - xi(j) * vals[j - 1]
}

/// Classical Legendre `L_k(x)` and its derivative on `[-1, 1]`.
fn legendre_with_derivative(k: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut curr = x;
    if k == 0 {
        return (1.0, 0.0);
    }
    for n in 1..k {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * x * curr - nf * prev) / (nf + 1.0);
        prev = curr;
        curr = next;
    }
    let kf = k as f64;
    let deriv = kf * (x * curr - prev) / (x * x - 1.0);
    (curr, deriv)
}

/// Nodes and weights of the `k`-point Gauss-Legendre rule on `[0, 1]`.
///
/// Nodes are returned in increasing order; the weights sum to one and the rule
/// integrates polynomials of degree `≤ 2k - 1` exactly.
pub fn gauss_legendre(k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::InvalidConfig(format!(
            "quadrature node count must lie in 1..={MAX_ORDER}, got {k}"
        )));
    }
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    let half = k.div_ceil(2);
    for i in 0..half {
        // Chebyshev guess for the i-th largest root on [-1, 1].
        let mut x = (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * k) as f64).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITERS {
            let (val, der) = legendre_with_derivative(k, x);
            let dx = val / der;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Quadrature {
                k,
                reason: format!("Newton iteration for root {i} did not converge"),
            });
        }
        if 2 * i + 1 == k {
            x = 0.0;
        }
        let (_, der) = legendre_with_derivative(k, x);
        let w = 1.0 / ((1.0 - x * x) * der * der);
        // x is positive here: map the pair ±x to 1/2 ∓ x/2 on [0, 1].
        let lo = k - 1 - i;
        nodes[lo] = 0.5 * (1.0 + x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[lo] = w;
        weights[i] = w;
    }

    for degree in 0..2 * k {
        let approx: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&c, &b)| b * c.powi(degree as i32))
            .sum();
        let exact = 1.0 / (degree as f64 + 1.0);
        if (approx - exact).abs() > EXACTNESS_TOL {
            return Err(Error::Quadrature {
                k,
                reason: format!("monomial c^{degree} integrated with error {:e}", approx - exact),
            });
        }
    }
    Ok((nodes, weights))
}

/// Quadrature data and structural matrices for an HBVM(k,s) method.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTables {
    s: usize,
    k: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    xi: Vec<f64>,
    p_hat: DMatrix<f64>,
    i_hat: DMatrix<f64>,
    x_s: DMatrix<f64>,
}

impl BasisTables {
    pub fn s(&self) -> usize {
        self.s
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Gauss-Legendre abscissae `ĉ_1 < … < ĉ_k`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Gauss-Legendre weights `b̂_1, …, b̂_k`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `ξ_0, …, ξ_{s-1}`.
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// `k × s` matrix with entries `P_{j}(ĉ_i)`.
    pub fn p_hat(&self) -> &DMatrix<f64> {
        &self.p_hat
    }

    /// `k × s` matrix with entries `∫₀^{ĉ_i} P_j(x) dx`.
    pub fn i_hat(&self) -> &DMatrix<f64> {
        &self.i_hat
    }

    /// `k × k` diagonal matrix of the weights.
    pub fn omega_hat(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.weights))
    }

    /// The `s × s` matrix with diagonal `(ξ_0, 0, …)`, subdiagonal `ξ_j` and
    /// superdiagonal `-ξ_j`.
    pub fn x_s(&self) -> &DMatrix<f64> {
        &self.x_s
    }
}

/// Builds the tables for polynomial count `s` and node count `k ≥ s`.
pub fn build_tables(s: usize, k: usize) -> Result<BasisTables> {
    if s == 0 || s > MAX_ORDER || k > MAX_ORDER {
        return Err(Error::InvalidConfig(format!(
            "s and k must lie in 1..={MAX_ORDER}, got s = {s}, k = {k}"
        )));
    }
    if k < s {
        return Err(Error::InvalidConfig(format!(
            "quadrature node count k = {k} must be at least s = {s}"
        )));
    }
    let (nodes, weights) = gauss_legendre(k)?;

    let mut p_hat = DMatrix::zeros(k, s);
    let mut i_hat = DMatrix::zeros(k, s);
    let mut vals = vec![0.0; s + 1];
    for (i, &c) in nodes.iter().enumerate() {
        eval_all(s, c, &mut vals);
        for j in 0..s {
            p_hat[(i, j)] = vals[j];
            i_hat[(i, j)] = if j == 0 {
                c
            } else {
                xi(j + 1) * vals[j + 1] - xi(j) * vals[j - 1]
            };
        }
    }

    let xi: Vec<f64> = (0..s).map(xi).collect();
    let mut x_s = DMatrix::zeros(s, s);
    x_s[(0, 0)] = xi[0];
    for j in 1..s {
        x_s[(j, j - 1)] = xi[j];
        x_s[(j - 1, j)] = -xi[j];
    }

    Ok(BasisTables {
        s,
        k,
        nodes,
        weights,
        xi,
        p_hat,
        i_hat,
        x_s,
    })
}
