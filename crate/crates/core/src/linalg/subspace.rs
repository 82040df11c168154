use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, eigh, fix_sign, norm, EigenDecomposition, LinalgError, SymMatrix};

/// A symmetric linear operator known only through its action.
pub trait SymOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Any upper bound on the largest eigenvalue (Gershgorin is fine).
    fn upper_bound(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct SubspaceOptions {
    /// Guard vectors carried beyond the requested count.
    pub extra: usize,
    /// Chebyshev filter degree per outer iteration.
    pub degree: usize,
    /// Residual tolerance relative to `1 + |largest wanted eigenvalue|`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        SubspaceOptions {
            extra: 24,
            degree: 60,
            tol: 1e-9,
            max_iter: 80,
            seed: 0,
        }
    }
}

/// Lowest `count` eigenpairs of `op` by Chebyshev-filtered subspace
/// iteration.
///
/// The filter damps everything above the current top Ritz value; each outer
/// step orthonormalizes the block and solves the projected problem with the
/// dense [`eigh`]. `warm` seeds the block (for example with the eigenvectors
/// of a nearby parameter), remaining columns are random.
pub fn lowest_eigenpairs(
    op: &dyn SymOperator,
    count: usize,
    warm: Option<&[Vec<f64>]>,
    opts: &SubspaceOptions,
) -> Result<EigenDecomposition, LinalgError> {
    let n = op.dim();
    if count == 0 || count > n {
        return Err(LinalgError::TooManyRequested { requested: count, dim: n });
    }
    let p = (count + opts.extra.max(1)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(p);
    if let Some(w) = warm {
        x.extend(w.iter().take(p).filter(|v| v.len() == n).cloned());
    }
    while x.len() < p {
        x.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }

    let upper = op.upper_bound();
    let mut last_residual = f64::INFINITY;
    for iter in 0..opts.max_iter {
        orthonormalize(&mut x, &mut rng);
        let (theta, ritz, ax) = rayleigh_ritz(op, &x)?;
        x = ritz;

        let scale = 1.0 + theta[count - 1].abs();
        let residual = (0..count)
            .map(|j| {
                ax[j].iter()
                    .zip(&x[j])
                    .map(|(a, b)| (a - theta[j] * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        last_residual = residual;
        if residual <= opts.tol * scale {
            let mut vectors: Vec<Vec<f64>> = x.into_iter().take(count).collect();
            for v in vectors.iter_mut() {
                fix_sign(v);
            }
            return Ok(EigenDecomposition {
                values: theta[..count].to_vec(),
                vectors,
                residual_norm: residual,
            });
        }
        if p == n {
            // the block spans everything; Rayleigh-Ritz is already exact
            if iter > 0 {
                break;
            }
            continue;
        }
        let lower = theta[0];
        let cut = theta[p - 1];
        if !(cut < upper) {
            continue;
        }
        x = chebyshev_filter(op, &x, opts.degree, lower, cut, upper);
    }
    Err(LinalgError::SubspaceStalled {
        iterations: opts.max_iter,
        residual: last_residual,
    })
}

fn orthonormalize(x: &mut [Vec<f64>], rng: &mut ChaCha8Rng) {
    let n = x.first().map_or(0, |v| v.len());
    for j in 0..x.len() {
        let mut attempts = 0;
        loop {
            let (done, rest) = x.split_at_mut(j);
            let v = &mut rest[0];
            let before = norm(v);
            for _ in 0..2 {
                for q in done.iter() {
                    let c = dot(q, v);
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
                }
            }
            let after = norm(v);
            if after > 1e-10 * before.max(f64::MIN_POSITIVE) && after > 0.0 {
                v.iter_mut().for_each(|a| *a /= after);
                break;
            }
            attempts += 1;
            if attempts > 5 {
                // give up on independence; leave a unit vector
                v.iter_mut().for_each(|a| *a = 0.0);
                v[j % n] = 1.0;
                break;
            }
            for a in v.iter_mut() {
                *a = rng.gen_range(-1.0..1.0);
            }
        }
    }
}

type RitzTriple = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

fn rayleigh_ritz(op: &dyn SymOperator, x: &[Vec<f64>]) -> Result<RitzTriple, LinalgError> {
    let n = op.dim();
    let p = x.len();
    let ax: Vec<Vec<f64>> = x
        .iter()
        .map(|v| {
            let mut y = vec![0.0; n];
            op.apply(v, &mut y);
            y
        })
        .collect();
    let mut h = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let v = 0.5 * (dot(&x[i], &ax[j]) + dot(&x[j], &ax[i]));
            h[i * p + j] = v;
            h[j * p + i] = v;
        }
    }
    let h = SymMatrix::from_row_major(p, h)?;
    let dec = eigh(&h)?;
    let rotate = |block: &[Vec<f64>]| -> Vec<Vec<f64>> {
        dec.vectors
            .iter()
            .map(|z| {
                let mut out = vec![0.0; n];
                for (coef, col) in z.iter().zip(block) {
                    if *coef != 0.0 {
                        out.iter_mut().zip(col).for_each(|(o, c)| *o += coef * c);
                    }
                }
                out
            })
            .collect()
    };
    Ok((dec.values.clone(), rotate(x), rotate(&ax)))
}

/// Scaled Chebyshev filter damping `[cut, upper]` relative to `lower`.
fn chebyshev_filter(op: &dyn SymOperator, x: &[Vec<f64>], degree: usize, lower: f64, cut: f64, upper: f64) -> Vec<Vec<f64>> {
    let n = op.dim();
    let e = 0.5 * (upper - cut);
    let c = 0.5 * (upper + cut);
    let sigma1 = e / (lower - c);
    let tau = 2.0 / sigma1;
    let mut ay = vec![0.0; n];
    x.iter()
        .map(|x0| {
            let mut prev = x0.clone();
            op.apply(&prev, &mut ay);
            let mut cur: Vec<f64> = ay.iter().zip(&prev).map(|(a, p)| (a - c * p) * sigma1 / e).collect();
            let mut sigma = sigma1;
            for _ in 1..degree.max(1) {
                let sigma_new = 1.0 / (tau - sigma);
                op.apply(&cur, &mut ay);
                let next: Vec<f64> = ay
                    .iter()
                    .zip(&cur)
                    .zip(&prev)
                    .map(|((a, y), p)| 2.0 * sigma_new / e * (a - c * y) - sigma * sigma_new * p)
                    .collect();
                prev = std::mem::replace(&mut cur, next);
                sigma = sigma_new;
            }
            cur
        })
        .collect()
}
