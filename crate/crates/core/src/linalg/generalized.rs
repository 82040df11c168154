use super::dense::residual;
use super::{eigh, fix_sign, EigenDecomposition, LinalgError, SymMatrix};

/// Lower Cholesky factor `B = L L^T`, row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

pub fn cholesky(b: &SymMatrix) -> Result<Cholesky, LinalgError> {
    b.check_finite()?;
    let n = b.dim();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut s = b.get(j, j);
        for k in 0..j {
            s -= l[j * n + k] * l[j * n + k];
        }
        if s <= 0.0 || !s.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: s });
        }
        let ljj = s.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = b.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(Cholesky { n, l })
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.l[i * n + i];
        }
        x
    }

    /// Solves `L^T x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            for k in 0..i {
                x[k] -= self.l[i * n + k] * xi;
            }
        }
        x
    }
}

/// Solves `A v = lambda B v` for symmetric `A` and symmetric positive
/// definite `B`. The returned vectors are B-orthonormal.
pub fn eigh_generalized(a: &SymMatrix, b: &SymMatrix) -> Result<EigenDecomposition, LinalgError> {
    let n = a.dim();
    if b.dim() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: b.dim(),
        });
    }
    a.check_finite()?;
    let chol = cholesky(b)?;

    // X = L^{-1} A, column by column (A is symmetric so its rows are its columns)
    let x_cols: Vec<Vec<f64>> = (0..n).map(|j| chol.solve_lower(a.row(j))).collect();
    // C = L^{-1} X^T, again column by column; columns of X^T are rows of X
    let mut x_rows = vec![0.0; n * n];
    for (j, col) in x_cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            x_rows[i * n + j] = *v;
        }
    }
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        let ci = chol.solve_lower(&x_rows[i * n..(i + 1) * n]);
        for (j, v) in ci.into_iter().enumerate() {
            c[j * n + i] = v;
        }
    }
    let c = SymMatrix::from_lower_fn(n, |i, j| 0.5 * (c[i * n + j] + c[j * n + i]))?;
    let std = eigh(&c)?;

    let mut vectors: Vec<Vec<f64>> = std.vectors.iter().map(|y| chol.solve_upper(y)).collect();
    for v in vectors.iter_mut() {
        fix_sign(v);
    }
    let residual_norm = residual(a, &std.values, &vectors, Some(b));
    Ok(EigenDecomposition {
        values: std.values,
        vectors,
        residual_norm,
    })
}
