use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::tql2;
use super::{dot, fix_sign, norm, EigenDecomposition, LinalgError};

/// Relative size of the substitute used for an exactly vanishing Sturm pivot.
pub const STURM_PIVOT_PERTURBATION: f64 = 1e-14;

/// Symmetric tridiagonal matrix: `diag` of length n, `off` of length n - 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self, LinalgError> {
        let n = diag.len();
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        if off.len() + 1 != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n - 1,
                found: off.len(),
            });
        }
        if let Some(i) = diag.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite { row: i, col: i });
        }
        if let Some(i) = off.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite { row: i + 1, col: i });
        }
        Ok(SymTridiagonal { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, x)| d * x).collect();
        for i in 0..n - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    fn one_norm(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues `<= x`.
    pub fn sturm_count(&self, x: f64) -> usize {
        let scale = self.one_norm().max(x.abs()).max(f64::MIN_POSITIVE);
        let tiny = STURM_PIVOT_PERTURBATION * scale;
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0..self.dim() {
            if i > 0 {
                q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / q;
            }
            if q.abs() < tiny {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Full spectrum via implicit QL.
    pub fn eigh(&self) -> Result<EigenDecomposition, LinalgError> {
        let n = self.dim();
        let mut d = self.diag.clone();
        let mut e = vec![0.0; n];
        e[1..].copy_from_slice(&self.off);
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        tql2(n, &mut v, &mut d, &mut e)?;
        let mut vectors: Vec<Vec<f64>> = v.chunks(n).map(|c| c.to_vec()).collect();
        for col in vectors.iter_mut() {
            fix_sign(col);
        }
        let residual_norm = self.residual(&d, &vectors);
        Ok(EigenDecomposition {
            values: d,
            vectors,
            residual_norm,
        })
    }

    /// The `index`-th smallest eigenvalue (0-based) by Sturm bisection.
    pub fn eigenvalue(&self, index: usize) -> Result<f64, LinalgError> {
        let n = self.dim();
        if index >= n {
            return Err(LinalgError::TooManyRequested {
                requested: index + 1,
                dim: n,
            });
        }
        let (mut lo, mut hi) = self.gershgorin();
        let pad = f64::EPSILON * (lo.abs() + hi.abs()) + f64::MIN_POSITIVE;
        lo -= pad;
        hi += pad;
        // invariant: count(lo) <= index < count(hi)
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
            if self.sturm_count(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Lowest `k` eigenpairs by bisection and inverse iteration.
    ///
    /// Vectors belonging to eigenvalues closer than `1e-3 * ||T||` are
    /// re-orthogonalized against each other, so numerically degenerate
    /// clusters still come back with an orthonormal basis.
    pub fn lowest(&self, k: usize) -> Result<EigenDecomposition, LinalgError> {
        let n = self.dim();
        if k > n {
            return Err(LinalgError::TooManyRequested { requested: k, dim: n });
        }
        let values = (0..k).map(|j| self.eigenvalue(j)).collect::<Result<Vec<_>, _>>()?;
        let tnorm = self.one_norm().max(f64::MIN_POSITIVE);
        let cluster_tol = 1e-3 * tnorm;
        let mut rng = ChaCha8Rng::seed_from_u64(0x7d1a_9011);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut cluster_start = 0;
        for (j, &lam) in values.iter().enumerate() {
            if j > 0 && lam - values[j - 1] > cluster_tol {
                cluster_start = j;
            }
            let lu = TridiagonalLu::factor(self, lam, tnorm);
            let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for _ in 0..4 {
                let nx = norm(&x);
                x.iter_mut().for_each(|xi| *xi /= nx);
                x = lu.solve(&x);
                for prev in &vectors[cluster_start..j] {
                    let c = dot(prev, &x);
                    x.iter_mut().zip(prev).for_each(|(xi, p)| *xi -= c * p);
                }
            }
            let nx = norm(&x);
            x.iter_mut().for_each(|xi| *xi /= nx);
            fix_sign(&mut x);
            vectors.push(x);
        }
        let residual_norm = self.residual(&values, &vectors);
        Ok(EigenDecomposition {
            values,
            vectors,
            residual_norm,
        })
    }

    fn residual(&self, values: &[f64], vectors: &[Vec<f64>]) -> f64 {
        values
            .iter()
            .zip(vectors)
            .map(|(&lam, v)| {
                let tv = self.matvec(v);
                tv.iter().zip(v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Number of eigenvalues of `t` that are `<= x`.
pub fn sturm_count(t: &SymTridiagonal, x: f64) -> usize {
    t.sturm_count(x)
}

/// LU with partial pivoting of `T - shift I`; U has two superdiagonals.
struct TridiagonalLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn factor(t: &SymTridiagonal, shift: f64, tnorm: f64) -> Self {
        let n = t.dim();
        let tiny = f64::EPSILON * tnorm;
        let mut u0: Vec<f64> = t.diag.iter().map(|d| d - shift).collect();
        let mut u1: Vec<f64> = t.off.clone();
        u1.push(0.0);
        let mut u2 = vec![0.0; n];
        let mut low: Vec<f64> = t.off.clone();
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            if low[i].abs() > u0[i].abs() {
                swapped[i] = true;
                // swap rows i and i+1
                let (a0, a1, a2) = (u0[i], u1[i], u2[i]);
                u0[i] = low[i];
                u1[i] = u0[i + 1];
                u2[i] = u1[i + 1];
                let m = a0 / u0[i];
                mult[i] = m;
                u0[i + 1] = a1 - m * u1[i];
                u1[i + 1] = a2 - m * u2[i];
                low[i] = 0.0;
            } else {
                if u0[i] == 0.0 {
                    u0[i] = tiny;
                }
                let m = low[i] / u0[i];
                mult[i] = m;
                u0[i + 1] -= m * u1[i];
            }
        }
        for p in u0.iter_mut() {
            if p.abs() < tiny {
                *p = if *p < 0.0 { -tiny } else { tiny };
            }
        }
        TridiagonalLu {
            u0,
            u1,
            u2,
            mult,
            swapped,
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.u0.len();
        let mut y = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] -= self.mult[i] * y[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn sturm_counts_on_diagonal() {
        let t = SymTridiagonal::new(vec![1.0, 2.0, 3.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(t.sturm_count(2.5), 2);
        assert_eq!(t.sturm_count(2.0), 2, "ties count as <=");
        let (lo, _) = t.gershgorin();
        assert_eq!(t.sturm_count(lo - 1.0), 0);
        assert_eq!(t.sturm_count(10.0), 3);
    }

    #[test]
    fn sturm_count_at_laplacian_median() {
        let n = 50;
        let t = laplacian(n);
        let mut exact: Vec<f64> = (1..=n)
            .map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
            .collect();
        exact.sort_by(f64::total_cmp);
        // midway between the 25th and 26th closed-form eigenvalues
        let x = 0.5 * (exact[24] + exact[25]);
        assert_eq!(sturm_count(&t, x), 25);
    }

    #[test]
    fn lowest_matches_full() {
        let t = SymTridiagonal::new(
            (0..40).map(|i| (i as f64 * 0.37).sin() * 3.0).collect(),
            (0..39).map(|i| 0.5 + (i as f64 * 0.11).cos()).collect(),
        )
        .unwrap();
        let full = t.eigh().unwrap();
        let low = t.lowest(8).unwrap();
        for j in 0..8 {
            assert!((full.values[j] - low.values[j]).abs() < 1e-12);
            let c = dot(&full.vectors[j], &low.vectors[j]).abs();
            assert!((c - 1.0).abs() < 1e-10, "vector {j}: overlap {c}");
        }
        assert!(low.residual_norm < 1e-12);
    }

    #[test]
    fn degenerate_pair_gets_orthonormal_vectors() {
        // two decoupled identical blocks give exact double eigenvalues
        let t = SymTridiagonal::new(vec![2.0, 2.0, 2.0, 2.0, 2.0, 2.0], vec![-1.0, -1.0, 0.0, -1.0, -1.0]).unwrap();
        let low = t.lowest(4).unwrap();
        assert!((low.values[0] - low.values[1]).abs() < 1e-14);
        for i in 0..4 {
            for j in 0..4 {
                let c = dot(&low.vectors[i], &low.vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((c - want).abs() < 1e-10, "({i},{j}) -> {c}");
            }
        }
    }
}
