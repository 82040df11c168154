//! Spectra of one-parameter families and the interface continuation needs.

use std::ops::Range;

use thiserror::Error;

use crate::linalg::{dot, eigh, LinalgError, SymMatrix};

/// Relative eigenvalue gap below which two eigenpairs are treated as one
/// degenerate cluster.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{what} is not finite at node {node}")]
    NonFiniteNode { what: &'static str, node: usize },
    #[error("mass weight not positive: {value:e} at node {node} (tau = {param})")]
    MassNotPositive { node: usize, param: f64, value: f64 },
}

/// Sorted eigenvalues and mass-orthonormal eigenvectors at one parameter.
///
/// A snapshot may hold only the bottom of the spectrum; every eigenvalue
/// strictly below `complete_below` is present.
#[derive(Debug, Clone)]
pub struct SpectrumSnapshot {
    pub param: f64,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub complete_below: f64,
    pub residual_norm: f64,
}

impl SpectrumSnapshot {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index ranges of eigenvalues whose consecutive gaps are below
    /// `tol * (1 + |E|)`.
    pub fn clusters(&self, tol: f64) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for j in 1..=self.values.len() {
            let split = j == self.values.len() || {
                let (a, b) = (self.values[j - 1], self.values[j]);
                b - a >= tol * (1.0 + a.abs().max(b.abs()))
            };
            if split {
                out.push(start..j);
                start = j;
            }
        }
        out
    }

    /// Keeps the lowest `count` pairs; `complete_below` tightens accordingly.
    pub fn truncate(&mut self, count: usize) {
        if count < self.values.len() {
            self.complete_below = self.complete_below.min(self.values[count]);
            self.values.truncate(count);
            self.vectors.truncate(count);
        }
    }
}

/// A real-analytic one-parameter family of generalized symmetric eigenproblems
/// `Q(p) u = E N(p) u`.
pub trait SpectralFamily {
    fn dim(&self) -> usize;

    /// Lowest `count` eigenpairs at `param`, vectors `N(param)`-normalized.
    fn solve(&self, param: f64, count: usize) -> Result<SpectrumSnapshot, SpectralError>;

    /// Same as [`solve`](Self::solve) but may reuse a nearby snapshot as a
    /// starting guess.
    fn solve_near(&self, param: f64, count: usize, _near: Option<&SpectrumSnapshot>) -> Result<SpectrumSnapshot, SpectralError> {
        self.solve(param, count)
    }

    /// Mass inner product `u^T N(param) v`.
    fn mass_inner(&self, param: f64, u: &[f64], v: &[f64]) -> f64;

    /// Bilinear form `u^T (Q'(param) - E N'(param)) v` whose diagonal on a
    /// normalized eigenvector is the eigenvalue derivative.
    fn slope_form(&self, param: f64, energy: f64, u: &[f64], v: &[f64]) -> f64;

    /// Stiffness part of the quadratic form, `u^T S u`.
    fn gradient_energy(&self, u: &[f64]) -> f64;

    /// Derivative of eigenvalue `j` of `snap` with respect to the parameter.
    fn hf_slope(&self, snap: &SpectrumSnapshot, j: usize) -> f64 {
        let u = &snap.vectors[j];
        self.slope_form(snap.param, snap.values[j], u, u)
    }
}

/// Rotates every degenerate cluster of `snap` so that the slope form is
/// diagonal on it, and orders cluster members by slope.
///
/// After this, [`SpectralFamily::hf_slope`] returns the derivatives of the
/// analytic branches passing through the cluster rather than arbitrary
/// diagonal entries.
pub fn resolve_degeneracies<F: SpectralFamily + ?Sized>(family: &F, snap: &mut SpectrumSnapshot) -> Result<(), SpectralError> {
    for range in snap.clusters(DEGENERACY_TOL) {
        let k = range.len();
        if k < 2 {
            continue;
        }
        let e = range.clone().map(|j| snap.values[j]).sum::<f64>() / k as f64;
        let members: Vec<Vec<f64>> = range.clone().map(|j| snap.vectors[j].clone()).collect();
        let d = SymMatrix::from_lower_fn(k, |a, b| {
            let ab = family.slope_form(snap.param, e, &members[a], &members[b]);
            let ba = family.slope_form(snap.param, e, &members[b], &members[a]);
            0.5 * (ab + ba)
        })?;
        let dec = eigh(&d)?;
        for (slot, z) in range.clone().zip(&dec.vectors) {
            let mut v = vec![0.0; members[0].len()];
            for (c, m) in z.iter().zip(&members) {
                v.iter_mut().zip(m).for_each(|(o, x)| *o += c * x);
            }
            crate::linalg::fix_sign(&mut v);
            snap.vectors[slot] = v;
        }
    }
    Ok(())
}

/// Mass-weighted overlap `|<u, v>_N| / (|u|_N |v|_N)`, in `[0, 1]`.
pub fn normalized_overlap<F: SpectralFamily + ?Sized>(family: &F, param: f64, u: &[f64], v: &[f64]) -> f64 {
    let uv = family.mass_inner(param, u, v);
    let uu = family.mass_inner(param, u, u);
    let vv = family.mass_inner(param, v, v);
    let denom = (uu * vv).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (uv.abs() / denom).min(1.0)
    }
}

/// `A(p) = A0 + p A1` with identity mass; the toy family used to exercise
/// continuation on closed-form crossings.
#[derive(Debug, Clone)]
pub struct LinearMatrixFamily {
    pub base: SymMatrix,
    pub direction: SymMatrix,
}

impl LinearMatrixFamily {
    pub fn new(base: SymMatrix, direction: SymMatrix) -> Result<Self, SpectralError> {
        if base.dim() != direction.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: base.dim(),
                found: direction.dim(),
            }
            .into());
        }
        Ok(LinearMatrixFamily { base, direction })
    }
}

impl SpectralFamily for LinearMatrixFamily {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn solve(&self, param: f64, count: usize) -> Result<SpectrumSnapshot, SpectralError> {
        let a = self.base.combine(1.0, &self.direction, param)?;
        let dec = eigh(&a)?;
        let mut snap = SpectrumSnapshot {
            param,
            values: dec.values,
            vectors: dec.vectors,
            complete_below: f64::INFINITY,
            residual_norm: dec.residual_norm,
        };
        resolve_degeneracies(self, &mut snap)?;
        snap.truncate(count);
        Ok(snap)
    }

    fn mass_inner(&self, _param: f64, u: &[f64], v: &[f64]) -> f64 {
        dot(u, v)
    }

    fn slope_form(&self, _param: f64, _energy: f64, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.direction.matvec(v))
    }

    fn gradient_energy(&self, u: &[f64]) -> f64 {
        self.base.quadratic_form(u)
    }
}
