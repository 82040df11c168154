//! Finite-difference semiclassical Schrödinger family `-t^2 Δ + V` on a
//! Dirichlet box `[-L, L]^d`, `d = 1, 2`.
//!
//! The discrete forms are
//!
//! * stiffness `S` with `u^T S u ≈ ∫|∇u|^2` (central differences, Dirichlet),
//! * potential `P = diag(V(x_i) w)` and mass `N = w I`, `w = Δx^d`,
//!
//! and the eigenproblem at `t` is `(t^2 S + P) u = E N u`. Because `N` is a
//! multiple of the identity the problem reduces to a standard symmetric one;
//! in one dimension that matrix is tridiagonal and the lowest eigenpairs are
//! found by Sturm bisection and inverse iteration.

mod potential;

pub use potential::{CriticalKind, CriticalPoint, Potential, PotentialKind};

use crate::linalg::{eigh, SymMatrix, SymTridiagonal};
use crate::spectrum::{resolve_degeneracies, SpectralError, SpectralFamily, SpectrumSnapshot};

/// Extra height of the potential at the box edge over the largest energy of
/// interest used by [`Grid::for_potential`].
pub const DEFAULT_BARRIER_MARGIN: f64 = 10.0;

/// Uniform interior nodes of `[-L, L]^d` with Dirichlet boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    half_extent: f64,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, half_extent: f64, n: usize) -> Result<Self, SpectralError> {
        if dim != 1 && dim != 2 {
            return Err(SpectralError::InvalidParameter {
                name: "dim",
                value: dim as f64,
                reason: "must be 1 or 2",
            });
        }
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(SpectralError::InvalidParameter {
                name: "half_extent",
                value: half_extent,
                reason: "must be positive and finite",
            });
        }
        if n < 8 {
            return Err(SpectralError::InvalidParameter {
                name: "n",
                value: n as f64,
                reason: "need at least 8 points per axis",
            });
        }
        Ok(Grid { dim, half_extent, n })
    }

    /// Box just large enough that `V >= e_max + DEFAULT_BARRIER_MARGIN` on its
    /// edges.
    pub fn for_potential(potential: &Potential, n: usize, e_max: f64) -> Result<Self, SpectralError> {
        let level = e_max + DEFAULT_BARRIER_MARGIN;
        let l = potential.confining_extent(level, 1e6).ok_or(SpectralError::InvalidParameter {
            name: "e_max",
            value: e_max,
            reason: "potential never reaches e_max + margin; set the box size explicitly",
        })?;
        Grid::new(potential.dim(), l, n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    /// Points per axis.
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of unknowns, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / (self.n + 1) as f64
    }

    /// Quadrature weight of one node, `Δx^d`.
    pub fn weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn axis(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|i| -self.half_extent + (i + 1) as f64 * h).collect()
    }

    /// Coordinates of node `index`; in 2-D the x index runs fastest.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let h = self.spacing();
        let c = |i: usize| -self.half_extent + (i + 1) as f64 * h;
        match self.dim {
            1 => vec![c(index)],
            _ => vec![c(index % self.n), c(index / self.n)],
        }
    }
}

/// Discrete quadratic forms of the family. `P` and `N` are diagonal and
/// stored as their diagonals.
#[derive(Debug, Clone)]
pub struct SchrodingerForms {
    grid: Grid,
    stiffness: SymMatrix,
    potential: Vec<f64>,
    mass: Vec<f64>,
    node_potential: Vec<f64>,
}

pub fn assemble(grid: &Grid, v: &Potential) -> Result<SchrodingerForms, SpectralError> {
    if v.dim() != grid.dim() {
        return Err(SpectralError::InvalidParameter {
            name: "potential dim",
            value: v.dim() as f64,
            reason: "does not match the grid",
        });
    }
    let size = grid.len();
    let w = grid.weight();
    let node_potential: Vec<f64> = (0..size).map(|i| v.eval(&grid.point(i))).collect();
    if let Some(node) = node_potential.iter().position(|x| !x.is_finite()) {
        return Err(SpectralError::NonFiniteNode { what: "potential", node });
    }
    let h = grid.spacing();
    let n = grid.points_per_axis();
    // each edge (and each edge to a boundary node) contributes (Δu/Δx)^2 Δx^d
    let edge = w / (h * h);
    let stiffness = match grid.dim() {
        1 => SymMatrix::from_lower_fn(size, |i, j| {
            if i == j {
                2.0 * edge
            } else if i == j + 1 {
                -edge
            } else {
                0.0
            }
        })?,
        _ => SymMatrix::from_lower_fn(size, |i, j| {
            if i == j {
                4.0 * edge
            } else if (i == j + 1 && i % n != 0) || i == j + n {
                -edge
            } else {
                0.0
            }
        })?,
    };
    Ok(SchrodingerForms {
        grid: grid.clone(),
        stiffness,
        potential: node_potential.iter().map(|x| x * w).collect(),
        mass: vec![w; size],
        node_potential,
    })
}

impl SchrodingerForms {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn stiffness(&self) -> &SymMatrix {
        &self.stiffness
    }

    /// Diagonal of `P`.
    pub fn potential_diagonal(&self) -> &[f64] {
        &self.potential
    }

    /// Diagonal of `N`.
    pub fn mass_diagonal(&self) -> &[f64] {
        &self.mass
    }

    /// `V` sampled at the nodes.
    pub fn node_potential(&self) -> &[f64] {
        &self.node_potential
    }

    /// `u^T S u`.
    pub fn gradient_energy(&self, u: &[f64]) -> f64 {
        self.stiffness_bilinear(u, u)
    }

    /// `u^T S v`, evaluated on the stencil.
    pub fn stiffness_bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let h = self.grid.spacing();
        let edge = self.grid.weight() / (h * h);
        let n = self.grid.points_per_axis();
        let mut s = 0.0;
        match self.grid.dim() {
            1 => {
                s += u[0] * v[0] + u[n - 1] * v[n - 1];
                for i in 1..n {
                    s += (u[i] - u[i - 1]) * (v[i] - v[i - 1]);
                }
            }
            _ => {
                for iy in 0..n {
                    for ix in 0..n {
                        let k = iy * n + ix;
                        if ix == 0 || ix == n - 1 {
                            s += u[k] * v[k];
                        }
                        if iy == 0 || iy == n - 1 {
                            s += u[k] * v[k];
                        }
                        if ix > 0 {
                            s += (u[k] - u[k - 1]) * (v[k] - v[k - 1]);
                        }
                        if iy > 0 {
                            s += (u[k] - u[k - n]) * (v[k] - v[k - n]);
                        }
                    }
                }
            }
        }
        s * edge
    }

    /// `u^T P u`.
    pub fn potential_energy(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.potential).map(|(x, p)| p * x * x).sum()
    }

    /// `u^T N v`.
    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.mass).map(|((a, b), m)| a * b * m).sum()
    }

    /// `q_t(u) = u^T (t^2 S + P) u`.
    pub fn energy_form(&self, t: f64, u: &[f64]) -> f64 {
        t * t * self.gradient_energy(u) + self.potential_energy(u)
    }

    /// Lowest `count` eigenpairs of `(t^2 S + P) u = E N u`; vectors are
    /// `N`-normalized. `count = dim()` returns the full spectrum.
    pub fn solve_lowest(&self, t: f64, count: usize) -> Result<SpectrumSnapshot, SpectralError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(SpectralError::InvalidParameter {
                name: "t",
                value: t,
                reason: "must be positive",
            });
        }
        let size = self.dim();
        let count = count.min(size);
        // N = w I, so the reduced matrix is (t^2 S + P) / w
        let w = self.grid.weight();
        let (values, mut vectors, residual, complete_below) = if self.grid.dim() == 1 {
            let diag: Vec<f64> = (0..size)
                .map(|i| (t * t * self.stiffness.get(i, i) + self.potential[i]) / w)
                .collect();
            let off: Vec<f64> = (1..size).map(|i| t * t * self.stiffness.get(i, i - 1) / w).collect();
            let tri = SymTridiagonal::new(diag, off)?;
            let (dec, next) = if count == size {
                (tri.eigh()?, f64::INFINITY)
            } else {
                (tri.lowest(count)?, tri.eigenvalue(count)?)
            };
            (dec.values, dec.vectors, dec.residual_norm, next)
        } else {
            let a = SymMatrix::from_lower_fn(size, |i, j| {
                let p = if i == j { self.potential[i] } else { 0.0 };
                (t * t * self.stiffness.get(i, j) + p) / w
            })?;
            let mut dec = eigh(&a)?;
            let next = dec.values.get(count).copied().unwrap_or(f64::INFINITY);
            dec.values.truncate(count);
            dec.vectors.truncate(count);
            (dec.values, dec.vectors, dec.residual_norm, next)
        };
        let scale = 1.0 / w.sqrt();
        for v in vectors.iter_mut() {
            v.iter_mut().for_each(|x| *x *= scale);
        }
        Ok(SpectrumSnapshot {
            param: t,
            values,
            vectors,
            complete_below,
            residual_norm: residual,
        })
    }

    /// Full spectrum at `t`.
    pub fn solve_at(&self, t: f64) -> Result<SpectrumSnapshot, SpectralError> {
        self.solve_lowest(t, self.dim())
    }
}

/// The forms viewed as a family in the semiclassical parameter `t`.
#[derive(Debug, Clone)]
pub struct SchrodingerFamily {
    forms: SchrodingerForms,
    potential: Potential,
}

impl SchrodingerFamily {
    pub fn new(grid: &Grid, potential: Potential) -> Result<Self, SpectralError> {
        let forms = assemble(grid, &potential)?;
        Ok(SchrodingerFamily { forms, potential })
    }

    pub fn forms(&self) -> &SchrodingerForms {
        &self.forms
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }
}

impl SpectralFamily for SchrodingerFamily {
    fn dim(&self) -> usize {
        self.forms.dim()
    }

    fn solve(&self, param: f64, count: usize) -> Result<SpectrumSnapshot, SpectralError> {
        let mut snap = self.forms.solve_lowest(param, count)?;
        resolve_degeneracies(self, &mut snap)?;
        Ok(snap)
    }

    fn mass_inner(&self, _param: f64, u: &[f64], v: &[f64]) -> f64 {
        self.forms.mass_inner(u, v)
    }

    /// `2t u^T S v`; the mass does not depend on `t`.
    fn slope_form(&self, param: f64, _energy: f64, u: &[f64], v: &[f64]) -> f64 {
        2.0 * param * self.forms.stiffness_bilinear(u, v)
    }

    fn gradient_energy(&self, u: &[f64]) -> f64 {
        self.forms.gradient_energy(u)
    }
}
