//! Dense symmetric eigensolvers.
//!
//! Everything spectral in this crate bottoms out here: a Householder
//! tridiagonalization followed by implicit-shift QL for the standard problem,
//! a Cholesky reduction for the symmetric-definite generalized problem, Sturm
//! counting and selective bisection/inverse iteration for tridiagonal
//! matrices, and a Chebyshev-filtered subspace iteration that reuses the dense
//! solver for its Rayleigh-Ritz step when only the bottom of a large sparse
//! spectrum is wanted.

mod dense;
mod generalized;
mod subspace;
mod tridiagonal;

pub use dense::{eigh, EigenDecomposition, SymMatrix};
pub use generalized::{cholesky, eigh_generalized, Cholesky};
pub use subspace::{lowest_eigenpairs, SubspaceOptions, SymOperator};
pub use tridiagonal::{sturm_count, SymTridiagonal};

use thiserror::Error;

/// Maximum implicit-QL sweeps spent on a single eigenvalue.
pub const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix dimension must be at least 1")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {diff:e}")]
    Asymmetric { row: usize, col: usize, diff: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("eigenvalue {index} did not converge after {iterations} sweeps")]
    NoConvergence { index: usize, iterations: usize },
    #[error("matrix is not positive definite: pivot {pivot} = {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("requested {requested} eigenpairs from a problem of dimension {dim}")]
    TooManyRequested { requested: usize, dim: usize },
    #[error("subspace iteration stalled after {iterations} iterations (residual {residual:e})")]
    SubspaceStalled { iterations: usize, residual: f64 },
}

/// Largest-magnitude component made positive.
///
/// Ties are broken towards the lowest index so the convention is
/// deterministic.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs * (1.0 + 1e-12) {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
