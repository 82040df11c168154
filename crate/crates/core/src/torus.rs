//! Conformal family `g_τ = (1 + τ f)^2 g_0` on the flat square torus
//! `(ℝ / 2πℤ)^2`.
//!
//! In two dimensions the Dirichlet energy is conformally invariant, so the
//! whole family lives in the mass matrix: `K u = E M_τ u` with `K` the
//! periodic 5-point graph Laplacian and `M_τ = diag((1 + τ f)^2 Δx^2)`. For
//! `f >= 0` the mass grows with `τ` and every eigenvalue decreases.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{eigh_generalized, lowest_eigenpairs, SubspaceOptions, SymMatrix, SymOperator};
use crate::spectrum::{resolve_degeneracies, SpectralError, SpectralFamily, SpectrumSnapshot};

/// Eigenvalues below this are the constant mode.
pub const ZERO_MODE_TOL: f64 = 1e-8;

/// Extra eigenpairs computed past the requested count so that a degenerate
/// cluster straddling the cut is seen whole before truncation.
const CLUSTER_GUARD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self, SpectralError> {
        if n < 8 || n % 2 != 0 {
            return Err(SpectralError::InvalidParameter {
                name: "n",
                value: n as f64,
                reason: "torus grid needs an even number of points, at least 8",
            });
        }
        Ok(TorusGrid { n })
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Node coordinates, x index fastest.
    pub fn point(&self, index: usize) -> (f64, f64) {
        let h = self.spacing();
        ((index % self.n) as f64 * h, (index / self.n) as f64 * h)
    }

    /// Eigenvalues below which the 5-point dispersion error stays small:
    /// half of `1/Δx^2`.
    pub fn trust_cutoff(&self) -> f64 {
        0.5 / self.spacing().powi(2)
    }
}

/// Conformal profile `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant { value: f64 },
    /// `1 + amplitude * cos x * cos y`
    Cosine { amplitude: f64 },
    /// Smooth bump in `x` only, supported in `|x - center| < half_width`
    /// (periodic distance).
    Strip { center: f64, half_width: f64, height: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Cosine { amplitude } => 1.0 + amplitude * x.cos() * y.cos(),
            Profile::Strip {
                center,
                half_width,
                height,
            } => {
                let d = (x - center).rem_euclid(2.0 * PI);
                let d = d.min(2.0 * PI - d) / half_width;
                if d < 1.0 {
                    height * (1.0 - 1.0 / (1.0 - d * d)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Profile::Zero => "zero",
            Profile::Constant { .. } => "constant",
            Profile::Cosine { .. } => "cosine",
            Profile::Strip { .. } => "strip",
        }
    }
}

/// Periodic 5-point stiffness, `u^T K u = Σ_edges (u_a - u_b)^2`.
#[derive(Debug, Clone, Copy)]
pub struct TorusStiffness {
    n: usize,
}

impl TorusStiffness {
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for iy in 0..n {
            let up = ((iy + 1) % n) * n;
            let down = ((iy + n - 1) % n) * n;
            let row = iy * n;
            for ix in 0..n {
                let right = (ix + 1) % n;
                let left = (ix + n - 1) % n;
                out[row + ix] =
                    4.0 * u[row + ix] - u[row + left] - u[row + right] - u[up + ix] - u[down + ix];
            }
        }
    }

    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for iy in 0..n {
            let up = ((iy + 1) % n) * n;
            let row = iy * n;
            for ix in 0..n {
                let k = row + ix;
                let r = row + (ix + 1) % n;
                let a = up + ix;
                s += (u[k] - u[r]) * (v[k] - v[r]) + (u[k] - u[a]) * (v[k] - v[a]);
            }
        }
        s
    }

    /// Dense copy; only sensible for small grids.
    pub fn to_dense(&self) -> Result<SymMatrix, SpectralError> {
        let size = self.n * self.n;
        let mut data = vec![0.0; size * size];
        let mut e = vec![0.0; size];
        let mut col = vec![0.0; size];
        for j in 0..size {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..size {
                data[i * size + j] = col[i];
            }
        }
        Ok(SymMatrix::from_row_major(size, data)?)
    }
}

#[derive(Debug, Clone)]
pub struct ConformalFamily {
    grid: TorusGrid,
    profile: Profile,
    f: Vec<f64>,
    tau0: f64,
    stiffness: TorusStiffness,
    subspace: SubspaceOptions,
}

pub fn assemble_family(grid: TorusGrid, profile: Profile, tau0: f64) -> Result<ConformalFamily, SpectralError> {
    if !(tau0 >= 0.0 && tau0.is_finite()) {
        return Err(SpectralError::InvalidParameter {
            name: "tau0",
            value: tau0,
            reason: "must be finite and non-negative",
        });
    }
    let f: Vec<f64> = (0..grid.len())
        .map(|i| {
            let (x, y) = grid.point(i);
            profile.eval(x, y)
        })
        .collect();
    if let Some(node) = f.iter().position(|v| !v.is_finite()) {
        return Err(SpectralError::NonFiniteNode { what: "profile", node });
    }
    // 1 + τ f is affine in τ, so the endpoints decide positivity
    for tau in [-tau0, tau0] {
        let (node, value) = f
            .iter()
            .map(|fi| 1.0 + tau * fi)
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("grid is non-empty");
        if value <= 0.0 {
            return Err(SpectralError::MassNotPositive { node, param: tau, value });
        }
    }
    Ok(ConformalFamily {
        grid,
        profile,
        f,
        tau0,
        stiffness: TorusStiffness { n: grid.n },
        subspace: SubspaceOptions::default(),
    })
}

struct ScaledStiffness<'a> {
    k: TorusStiffness,
    inv_sqrt_mass: &'a [f64],
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl SymOperator for ScaledStiffness<'_> {
    fn dim(&self) -> usize {
        self.inv_sqrt_mass.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut s = self.scratch.borrow_mut();
        for ((si, xi), d) in s.iter_mut().zip(x).zip(self.inv_sqrt_mass) {
            *si = xi * d;
        }
        self.k.apply(&s, y);
        for (yi, d) in y.iter_mut().zip(self.inv_sqrt_mass) {
            *yi *= d;
        }
    }

    fn upper_bound(&self) -> f64 {
        let dmax = self.inv_sqrt_mass.iter().cloned().fold(0.0, f64::max);
        8.0 * dmax * dmax
    }
}

impl ConformalFamily {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    /// `f` at the nodes.
    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn stiffness(&self) -> TorusStiffness {
        self.stiffness
    }

    pub fn set_subspace_options(&mut self, opts: SubspaceOptions) {
        self.subspace = opts;
    }

    fn check_tau(&self, tau: f64) -> Result<(), SpectralError> {
        if tau.abs() > self.tau0 * (1.0 + 1e-12) || !tau.is_finite() {
            return Err(SpectralError::InvalidParameter {
                name: "tau",
                value: tau,
                reason: "outside [-tau0, tau0]",
            });
        }
        Ok(())
    }

    /// Diagonal of `M_τ`, `(1 + τ f)^2 Δx^2`.
    pub fn mass_diagonal(&self, tau: f64) -> Vec<f64> {
        let h2 = self.grid.spacing().powi(2);
        self.f.iter().map(|fi| (1.0 + tau * fi).powi(2) * h2).collect()
    }

    /// Diagonal of `dM_τ/dτ`, `2 f (1 + τ f) Δx^2`.
    pub fn mass_derivative_diagonal(&self, tau: f64) -> Vec<f64> {
        let h2 = self.grid.spacing().powi(2);
        self.f.iter().map(|fi| 2.0 * fi * (1.0 + tau * fi) * h2).collect()
    }

    /// Riemannian area `Σ (1 + τ f)^2 Δx^2`.
    pub fn volume(&self, tau: f64) -> f64 {
        self.mass_diagonal(tau).iter().sum()
    }

    /// Full spectrum by the dense generalized solver.
    pub fn solve_at(&self, tau: f64) -> Result<SpectrumSnapshot, SpectralError> {
        self.check_tau(tau)?;
        let k = self.stiffness.to_dense()?;
        let m = SymMatrix::from_diagonal(&self.mass_diagonal(tau))?;
        let dec = eigh_generalized(&k, &m)?;
        let mut snap = SpectrumSnapshot {
            param: tau,
            values: dec.values,
            vectors: dec.vectors,
            complete_below: f64::INFINITY,
            residual_norm: dec.residual_norm,
        };
        resolve_degeneracies(self, &mut snap)?;
        Ok(snap)
    }

    /// Lowest `count` eigenpairs by filtered subspace iteration, optionally
    /// warm-started from a snapshot at a nearby `τ`.
    pub fn solve_lowest(&self, tau: f64, count: usize, warm: Option<&SpectrumSnapshot>) -> Result<SpectrumSnapshot, SpectralError> {
        self.check_tau(tau)?;
        let size = self.grid.len();
        let wanted = (count + CLUSTER_GUARD).min(size);
        let mass = self.mass_diagonal(tau);
        let sqrt_m: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
        let inv_sqrt_m: Vec<f64> = sqrt_m.iter().map(|s| 1.0 / s).collect();
        let op = ScaledStiffness {
            k: self.stiffness,
            inv_sqrt_mass: &inv_sqrt_m,
            scratch: std::cell::RefCell::new(vec![0.0; size]),
        };
        let warm_vectors: Option<Vec<Vec<f64>>> = warm.map(|s| {
            s.vectors
                .iter()
                .map(|u| u.iter().zip(&sqrt_m).map(|(a, b)| a * b).collect())
                .collect()
        });
        let dec = lowest_eigenpairs(&op, wanted, warm_vectors.as_deref(), &self.subspace)?;
        let vectors = dec
            .vectors
            .into_iter()
            .map(|y| y.iter().zip(&inv_sqrt_m).map(|(a, b)| a * b).collect())
            .collect();
        let mut snap = SpectrumSnapshot {
            param: tau,
            values: dec.values,
            vectors,
            complete_below: f64::INFINITY,
            residual_norm: dec.residual_norm,
        };
        if wanted < size {
            // only the returned pairs are known
            snap.complete_below = *snap.values.last().expect("wanted >= 1");
        }
        resolve_degeneracies(self, &mut snap)?;
        snap.truncate(count);
        Ok(snap)
    }

    /// Whether pair `j` of `snap` is the constant mode.
    pub fn is_constant_mode(&self, snap: &SpectrumSnapshot, j: usize) -> bool {
        snap.values[j].abs() <= ZERO_MODE_TOL
    }

    /// `d ln E_j / dτ = -u^T Ṁ_τ u` for `M_τ`-normalized `u`.
    pub fn log_derivative_symbolic(&self, tau: f64, snap: &SpectrumSnapshot, j: usize) -> Result<f64, SpectralError> {
        let e = snap.values[j];
        if e <= ZERO_MODE_TOL {
            return Err(SpectralError::InvalidParameter {
                name: "eigenvalue",
                value: e,
                reason: "log-derivative undefined for the constant mode",
            });
        }
        let u = &snap.vectors[j];
        let md = self.mass_derivative_diagonal(tau);
        Ok(-u.iter().zip(&md).map(|(x, m)| m * x * x).sum::<f64>())
    }

    /// The region `{2 f > ε}` on the grid.
    pub fn control_region(&self, epsilon: f64) -> Result<ControlRegion, SpectralError> {
        ControlRegion::new(self.grid, self.f.clone(), epsilon)
    }
}

impl SpectralFamily for ConformalFamily {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn solve(&self, param: f64, count: usize) -> Result<SpectrumSnapshot, SpectralError> {
        if self.grid.len() <= 400 {
            let mut s = self.solve_at(param)?;
            s.truncate(count);
            Ok(s)
        } else {
            self.solve_lowest(param, count, None)
        }
    }

    fn solve_near(&self, param: f64, count: usize, near: Option<&SpectrumSnapshot>) -> Result<SpectrumSnapshot, SpectralError> {
        if self.grid.len() <= 400 {
            self.solve(param, count)
        } else {
            self.solve_lowest(param, count, near)
        }
    }

    fn mass_inner(&self, param: f64, u: &[f64], v: &[f64]) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        u.iter()
            .zip(v)
            .zip(&self.f)
            .map(|((a, b), fi)| a * b * (1.0 + param * fi).powi(2))
            .sum::<f64>()
            * h2
    }

    /// `-E u^T Ṁ_τ v`; `K` does not depend on `τ`.
    fn slope_form(&self, param: f64, energy: f64, u: &[f64], v: &[f64]) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        let m: f64 = u
            .iter()
            .zip(v)
            .zip(&self.f)
            .map(|((a, b), fi)| a * b * 2.0 * fi * (1.0 + param * fi))
            .sum::<f64>()
            * h2;
        -energy * m
    }

    fn gradient_energy(&self, u: &[f64]) -> f64 {
        self.stiffness.bilinear(u, u)
    }
}

/// Grid region `{2 f > ε}` with bilinear membership between nodes.
#[derive(Debug, Clone)]
pub struct ControlRegion {
    grid: TorusGrid,
    f: Vec<f64>,
    epsilon: f64,
}

impl ControlRegion {
    pub fn new(grid: TorusGrid, f: Vec<f64>, epsilon: f64) -> Result<Self, SpectralError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(SpectralError::InvalidParameter {
                name: "epsilon",
                value: epsilon,
                reason: "must be positive",
            });
        }
        if f.len() != grid.len() {
            return Err(SpectralError::InvalidParameter {
                name: "profile length",
                value: f.len() as f64,
                reason: "does not match the grid",
            });
        }
        Ok(ControlRegion { grid, f, epsilon })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn node_inside(&self, index: usize) -> bool {
        2.0 * self.f[index] > self.epsilon
    }

    pub fn node_count(&self) -> usize {
        (0..self.f.len()).filter(|&i| self.node_inside(i)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.node_count() == 0
    }

    pub fn is_everything(&self) -> bool {
        self.node_count() == self.f.len()
    }

    /// `f` interpolated bilinearly from the nodes at a point of the torus.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let n = self.grid.n;
        let h = self.grid.spacing();
        let gx = x.rem_euclid(2.0 * PI) / h;
        let gy = y.rem_euclid(2.0 * PI) / h;
        let (ix, iy) = (gx.floor() as usize % n, gy.floor() as usize % n);
        let (sx, sy) = (gx - gx.floor(), gy - gy.floor());
        let (jx, jy) = ((ix + 1) % n, (iy + 1) % n);
        let at = |a: usize, b: usize| self.f[b * n + a];
        (1.0 - sx) * (1.0 - sy) * at(ix, iy) + sx * (1.0 - sy) * at(jx, iy) + (1.0 - sx) * sy * at(ix, jy) + sx * sy * at(jx, jy)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        2.0 * self.interpolate(x, y) > self.epsilon
    }

    /// Largest distance from an inside node to the nearest outside node
    /// (periodic), or `None` when nothing is outside.
    pub fn inradius(&self) -> Option<f64> {
        let n = self.grid.n;
        let outside: Vec<(usize, usize)> = (0..self.f.len()).filter(|&i| !self.node_inside(i)).map(|i| (i % n, i / n)).collect();
        if outside.is_empty() {
            return None;
        }
        let h = self.grid.spacing();
        let wrap = |a: usize, b: usize| {
            let d = a.abs_diff(b);
            d.min(n - d) as f64
        };
        let mut best = 0.0f64;
        for i in (0..self.f.len()).filter(|&i| self.node_inside(i)) {
            let (x, y) = (i % n, i / n);
            let d = outside
                .iter()
                .map(|&(a, b)| wrap(x, a).hypot(wrap(y, b)))
                .fold(f64::INFINITY, f64::min);
            best = best.max(d);
        }
        Some(best * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    #[test]
    fn stiffness_dense_is_symmetric_laplacian() {
        let k = TorusStiffness { n: 8 }.to_dense().unwrap();
        for i in 0..64 {
            assert_eq!(k.get(i, i), 4.0);
            assert_eq!(k.row(i).iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn bilinear_matches_apply() {
        let k = TorusStiffness { n: 10 };
        let u: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let v: Vec<f64> = (0..100).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut kv = vec![0.0; 100];
        k.apply(&v, &mut kv);
        assert!((k.bilinear(&u, &v) - dot(&u, &kv)).abs() < 1e-12);
    }

    #[test]
    fn positivity_violation_reports_node() {
        let grid = TorusGrid::new(8).unwrap();
        match assemble_family(grid, Profile::Constant { value: 2.0 }, 0.6) {
            Err(SpectralError::MassNotPositive { param, value, .. }) => {
                assert_eq!(param, -0.6);
                assert!(value < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn strip_profile_support() {
        let p = Profile::Strip {
            center: PI,
            half_width: 0.5,
            height: 1.0,
        };
        assert_eq!(p.eval(0.0, 1.0), 0.0);
        assert!((p.eval(PI, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(p.eval(PI + 0.5, 0.0), 0.0);
    }

    #[test]
    fn grid_rules() {
        assert!(TorusGrid::new(7).is_err());
        assert!(TorusGrid::new(6).is_err());
        let g = TorusGrid::new(64).unwrap();
        assert!((g.trust_cutoff() - 0.5 * (64.0 / (2.0 * PI)).powi(2)).abs() < 1e-12);
    }
}
