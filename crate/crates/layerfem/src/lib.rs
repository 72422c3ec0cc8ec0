//! Finite elements for singularly perturbed reaction-diffusion problems
//!
//! Solves -eps^2 (Laplace u) + b u = f on the unit square with homogeneous
//! Dirichlet conditions, using Q_k elements (k = 1, 2, 3) on Bakhvalov-type
//! tensor meshes that resolve the boundary layers. Besides the solver, the
//! crate provides the layer-aware interpolation operators needed to measure
//! supercloseness in the balanced norm, and a convergence-study harness.
//!
//! Module map:
//! - [`meshgen`]: 1-D Bakhvalov-type mesh generation and mesh diagnostics
//! - [`fespace`]: tensor-product Q_k spaces, quadrature, nodal evaluation
//! - [`assembly`]: stiffness/mass assembly and Dirichlet elimination
//! - [`linsolve`]: CSR matrices, preconditioned CG, small dense solves
//! - [`interp`]: nodal interpolation, weighted projection, vertex-edge-cell
//!   interpolation and its boundary-layer corrections
//! - [`problem`]: the manufactured layer problem and its decomposition
//! - [`harness`]: error norms, convergence tables, CSV output

pub mod assembly;
pub mod fespace;
pub mod harness;
pub mod interp;
pub mod linsolve;
pub mod meshgen;
pub mod problem;

use std::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone)]
pub enum Error {
    /// Parameter validation failed; the message names the violated condition.
    InvalidParams(String),
    /// A linear system was singular or otherwise unsolvable.
    Singular(String),
    /// An iterative solver did not reach its tolerance.
    NoConvergence {
        iterations: usize,
        residual: f64,
    },
    /// Requested feature outside the supported range (e.g. degree).
    Unsupported(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Error::Singular(msg) => write!(f, "singular system: {msg}"),
            Error::NoConvergence { iterations, residual } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

/// Distance between two finite floats in units in the last place.
/// Uses the monotone bit mapping, so values straddling zero count through it.
pub(crate) fn ulps_apart(a: f64, b: f64) -> u64 {
    fn key(x: f64) -> u64 {
        let bits = x.to_bits();
        if bits >> 63 == 1 {
            !bits
        } else {
            bits | (1 << 63)
        }
    }
    key(a).abs_diff(key(b))
}
