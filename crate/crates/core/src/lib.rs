//! Energy- and constraint-conserving HBVM(k,s) integrators for separable
//! Hamiltonian systems with holonomic constraints.
//!
//! * [`polybasis`]: shifted Legendre basis, Gauss-Legendre rules, structural matrices.
//! * [`model`]: the problem class and exact-multiplier utilities.
//! * [`hbvm`]: the step kernel and trajectory integration.
//! * [`problems`]: the benchmark problems and their reference solutions.
//! * [`analysis`]: error metrics and convergence tables.
//! * [`cli`]: the experiment runner behind the `hbvm` binary.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod hbvm;
mod linalg;
pub mod model;
pub mod polybasis;
pub mod problems;

pub use error::{Error, Result};
pub use hbvm::{integrate, step, HbvmConfig, SpectralCoefficients, Trajectory};
pub use model::{ConstrainedHamiltonianSystem, State};
pub use polybasis::{build_tables, BasisTables};
pub use problems::BenchmarkProblem;
