use super::{fix_sign, LinalgError, MAX_SWEEPS_PER_EIGENVALUE};

/// Dense real symmetric matrix, stored row-major in full.
///
/// Only the lower triangle is authoritative: constructors reject inputs whose
/// upper and lower triangles disagree by more than `1e-12 * max|a_ij|` and
/// then mirror the lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != n * n {
            return Err(LinalgError::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        let mut max_abs: f64 = 0.0;
        for (k, x) in data.iter().enumerate() {
            if !x.is_finite() {
                return Err(LinalgError::NonFinite {
                    row: k / n,
                    col: k % n,
                });
            }
            max_abs = max_abs.max(x.abs());
        }
        let tol = 1e-12 * max_abs;
        for i in 0..n {
            for j in 0..i {
                let diff = (data[i * n + j] - data[j * n + i]).abs();
                if diff > tol {
                    return Err(LinalgError::Asymmetric { row: i, col: j, diff });
                }
            }
        }
        let mut m = SymMatrix { n, data };
        m.mirror_lower();
        Ok(m)
    }

    /// Builds from a function evaluated on the lower triangle `j <= i`.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, LinalgError> {
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(SymMatrix { n, data })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, LinalgError> {
        let n = diag.len();
        Self::from_lower_fn(n, |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn identity(n: usize) -> Result<Self, LinalgError> {
        Self::from_lower_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    fn mirror_lower(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in 0..i {
                self.data[j * n + i] = self.data[i * n + j];
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| super::dot(self.row(i), x)).collect()
    }

    /// `x^T A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        super::dot(x, &self.matvec(x))
    }

    /// `alpha * self + beta * other`
    pub fn combine(&self, alpha: f64, other: &SymMatrix, beta: f64) -> Result<SymMatrix, LinalgError> {
        if other.n != self.n {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(SymMatrix { n: self.n, data })
    }

    /// Returns `Some((diag, off))` when every entry outside the first
    /// sub/super-diagonal is exactly zero.
    pub fn as_tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        for i in 0..n {
            for j in 0..i.saturating_sub(1) {
                if self.get(i, j) != 0.0 {
                    return None;
                }
            }
        }
        let diag = self.diagonal();
        let off = (1..n).map(|i| self.get(i, i - 1)).collect();
        Some((diag, off))
    }

    pub(crate) fn check_finite(&self) -> Result<(), LinalgError> {
        for (k, x) in self.data.iter().enumerate() {
            if !x.is_finite() {
                return Err(LinalgError::NonFinite {
                    row: k / self.n,
                    col: k % self.n,
                });
            }
        }
        Ok(())
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// `vectors[j]` is the eigenvector for `values[j]`.
    pub vectors: Vec<Vec<f64>>,
    /// `max_j ||A v_j - lambda_j v_j||` (or `||A v_j - lambda_j B v_j||`).
    pub residual_norm: f64,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Full eigendecomposition of a dense symmetric matrix.
pub fn eigh(a: &SymMatrix) -> Result<EigenDecomposition, LinalgError> {
    a.check_finite()?;
    let n = a.dim();
    // column-major working copy; the input is symmetric so the row-major
    // buffer is already its own transpose
    let mut v = a.data().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;

    let mut vectors: Vec<Vec<f64>> = v.chunks(n).map(|c| c.to_vec()).collect();
    for col in vectors.iter_mut() {
        fix_sign(col);
    }
    let residual_norm = residual(a, &d, &vectors, None);
    Ok(EigenDecomposition {
        values: d,
        vectors,
        residual_norm,
    })
}

pub(crate) fn residual(a: &SymMatrix, values: &[f64], vectors: &[Vec<f64>], b: Option<&SymMatrix>) -> f64 {
    values
        .iter()
        .zip(vectors)
        .map(|(&lam, v)| {
            let av = a.matvec(v);
            let bv = match b {
                Some(b) => b.matvec(v),
                None => v.clone(),
            };
            av.iter()
                .zip(&bv)
                .map(|(x, y)| (x - lam * y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Householder reduction to tridiagonal form with accumulated transforms.
///
/// `v` is column-major: entry `(row k, col j)` lives at `j * n + k`. On exit
/// `d` holds the diagonal, `e[1..]` the subdiagonal and `v` the orthogonal
/// similarity.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |k: usize, j: usize| j * n + k;

    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                let col = &v[j * n..j * n + i];
                for k in (j + 1)..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = &mut v[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let (left, right) = v.split_at_mut((i + 1) * n);
                let col_next = &right[..=i];
                let col_j = &mut left[j * n..j * n + i + 1];
                let g: f64 = col_next.iter().zip(col_j.iter()).map(|(a, b)| a * b).sum();
                for k in 0..=i {
                    col_j[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on the tridiagonal `(d, e[1..])`, rotating the columns
/// of the column-major `v`. Eigenvalues come back sorted ascending.
pub(crate) fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_SWEEPS_PER_EIGENVALUE {
                    return Err(LinalgError::NoConvergence {
                        index: l,
                        iterations: MAX_SWEEPS_PER_EIGENVALUE,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    let (left, right) = v.split_at_mut((i + 1) * n);
                    let col_i = &mut left[i * n..];
                    let col_next = &mut right[..n];
                    for (a, b) in col_i.iter_mut().zip(col_next.iter_mut()) {
                        let hb = *b;
                        *b = s * *a + c * hb;
                        *a = c * *a - s * hb;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // selection sort keeps column swaps to at most n - 1
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            let (left, right) = v.split_at_mut(k * n);
            left[i * n..(i + 1) * n].swap_with_slice(&mut right[..n]);
        }
    }
    Ok(())
}
