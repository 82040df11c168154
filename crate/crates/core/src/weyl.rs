//! Counting functions and windowed Weyl remainders of a one-parameter family.
//!
//! * `N(τ, E) = #{j : E_j(τ) <= E}`
//! * `R_M(τ, E) = N(τ, E + M) - N(τ, E - M)`
//! * `R̄_M(E) = ∫ R_M(τ, E) dτ` over `[-τ0, τ0]`
//!
//! The integral is computed two ways: by quadrature over a `τ` grid, and as
//! the sum over branches of the Lebesgue measure of the set of `τ` where the
//! branch sits in the window `(E - M, E + M]`. The second is exact up to root
//! finding when the branches are monotone.

use serde::Serialize;
use thiserror::Error;

use crate::branches::Branch;
use crate::spectrum::{SpectralError, SpectrumSnapshot};

/// Root-finding tolerance in the parameter.
pub const ROOT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeylError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("snapshot at {param} is only complete below {complete_below}, needed up to {needed}")]
    IncompleteSpectrum { param: f64, complete_below: f64, needed: f64 },
    #[error("need at least {needed} energies spanning a factor {span}, got {have} spanning {have_span:.3}")]
    FitRange { needed: usize, span: f64, have: usize, have_span: f64 },
    #[error("zero counts in the fit range and offsetting is disabled")]
    ZeroCounts,
    #[error("trusted energy range is empty")]
    EmptyTrustedRange,
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
}

/// `#{v in snapshot : v <= e}`; ties count.
pub fn count(snap: &SpectrumSnapshot, e: f64) -> usize {
    snap.values.partition_point(|v| *v <= e)
}

fn checked_count(snap: &SpectrumSnapshot, e: f64) -> Result<usize, WeylError> {
    if e >= snap.complete_below {
        return Err(WeylError::IncompleteSpectrum {
            param: snap.param,
            complete_below: snap.complete_below,
            needed: e,
        });
    }
    Ok(count(snap, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemainderMethod {
    QuadratureOverTau,
    BranchIntervalMeasure,
}

/// `N` and `R_M` over a `τ` × `E` grid with the `τ`-integrated remainder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingTable {
    pub taus: Vec<f64>,
    pub energies: Vec<f64>,
    pub window: f64,
    /// `counts[i][k] = N(taus[i], energies[k])`
    pub counts: Vec<Vec<usize>>,
    /// `remainders[i][k] = R_M(taus[i], energies[k])`
    pub remainders: Vec<Vec<usize>>,
    /// Trapezoid integral of `R_M(·, E)` over the `τ` grid.
    pub integrated: Vec<f64>,
    pub method: RemainderMethod,
}

impl CountingTable {
    /// Builds the table from snapshots sorted by parameter.
    pub fn from_snapshots(snapshots: &[SpectrumSnapshot], energies: &[f64], window: f64) -> Result<Self, WeylError> {
        if !(window > 0.0) {
            return Err(WeylError::InvalidParameter {
                name: "window",
                value: window,
                reason: "must be positive",
            });
        }
        if snapshots.windows(2).any(|w| w[1].param <= w[0].param) {
            return Err(WeylError::InvalidParameter {
                name: "tau grid",
                value: f64::NAN,
                reason: "snapshots must be sorted by strictly increasing parameter",
            });
        }
        let mut counts = Vec::with_capacity(snapshots.len());
        let mut remainders = Vec::with_capacity(snapshots.len());
        for snap in snapshots {
            let mut row = Vec::with_capacity(energies.len());
            let mut rem = Vec::with_capacity(energies.len());
            for &e in energies {
                row.push(checked_count(snap, e)?);
                rem.push(checked_count(snap, e + window)? - checked_count(snap, e - window)?);
            }
            counts.push(row);
            remainders.push(rem);
        }
        let taus: Vec<f64> = snapshots.iter().map(|s| s.param).collect();
        let integrated = (0..energies.len())
            .map(|k| {
                taus.windows(2)
                    .enumerate()
                    .map(|(i, w)| 0.5 * (remainders[i][k] + remainders[i + 1][k]) as f64 * (w[1] - w[0]))
                    .sum()
            })
            .collect();
        Ok(CountingTable {
            taus,
            energies: energies.to_vec(),
            window,
            counts,
            remainders,
            integrated,
            method: RemainderMethod::QuadratureOverTau,
        })
    }

    /// Row index of the parameter closest to `tau`.
    pub fn row_near(&self, tau: f64) -> usize {
        (0..self.taus.len())
            .min_by(|&a, &b| (self.taus[a] - tau).abs().total_cmp(&(self.taus[b] - tau).abs()))
            .expect("table has rows")
    }

    /// Grid spacing in `τ` (largest step).
    pub fn tau_step(&self) -> f64 {
        self.taus.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// Time one branch spends in the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dwell {
    pub branch: usize,
    /// Parameter where the branch enters the window (clipped to the range).
    pub enter: f64,
    pub exit: f64,
    pub length: f64,
    /// Number of window edges crossed strictly inside the range.
    pub crossings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratedRemainder {
    pub energy: f64,
    pub window: f64,
    pub value: f64,
    pub dwells: Vec<Dwell>,
    /// Branches skipped because their slopes change sign.
    pub excluded_nonmonotone: Vec<usize>,
    /// Largest `|E(τ*) - level|` seen after re-solve refinement, if any.
    pub max_refined_residual: Option<f64>,
}

impl IntegratedRemainder {
    pub fn contributing(&self) -> usize {
        self.dwells.iter().filter(|d| d.length > 0.0).count()
    }

    pub fn crossings(&self) -> usize {
        self.dwells.iter().map(|d| d.crossings).sum()
    }
}

/// Re-solve hook: `(branch id, τ) -> (E(τ), dE/dτ)`.
pub type Refiner<'a> = dyn FnMut(usize, f64) -> Result<(f64, f64), SpectralError> + 'a;

/// Cubic Hermite interpolant on `[t0, t1]` from values and slopes.
fn hermite(t0: f64, t1: f64, e0: f64, e1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * e0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * e1 + (s3 - s2) * h * d1
}

/// Samples `(τ, E, dE/dτ)` of a non-increasing branch, sorted by `τ`.
struct Decreasing<'a> {
    pts: &'a [(f64, f64, f64)],
}

impl Decreasing<'_> {
    /// `inf{τ : E(τ) <= level}` clipped to the sampled range, and whether
    /// the level is crossed strictly inside.
    fn first_below(&self, level: f64) -> (f64, bool) {
        let pts = self.pts;
        let (a, b) = (pts[0], pts[pts.len() - 1]);
        if a.1 <= level {
            return (a.0, false);
        }
        if b.1 > level {
            return (b.0, false);
        }
        let i = pts.windows(2).position(|w| w[0].1 > level && w[1].1 <= level).expect("bracketed");
        let (p, q) = (pts[i], pts[i + 1]);
        let f = |t: f64| hermite(p.0, q.0, p.1, q.1, p.2, q.2, t) - level;
        let (mut lo, mut hi) = (p.0, q.0);
        // f(lo) > 0 >= f(hi)
        while hi - lo > 0.25 * ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), true)
    }
}

/// Polishes a root of `E(τ) = level` with Newton steps on re-solved values.
fn refine_root(refine: &mut Refiner<'_>, branch: usize, mut tau: f64, level: f64, lo: f64, hi: f64) -> Result<(f64, f64), SpectralError> {
    let mut residual = f64::INFINITY;
    for _ in 0..6 {
        let (e, d) = refine(branch, tau)?;
        residual = (e - level).abs();
        if d == 0.0 {
            break;
        }
        let step = (e - level) / d;
        tau = (tau - step).clamp(lo, hi);
        if step.abs() <= ROOT_TOL {
            break;
        }
    }
    Ok((tau, residual))
}

/// Sum over branches of the measure of `{τ in [-τ0, τ0] : E - M < E_j(τ) <= E + M}`.
///
/// Each branch must be monotone; increasing branches are handled by
/// mirroring `τ`. Branches whose slopes change sign are excluded and listed.
/// With `refine`, every interior window crossing is polished by re-solving
/// the family near the interpolated root.
pub fn integrated_remainder(
    branches: &[Branch],
    tau0: f64,
    energy: f64,
    window: f64,
    mut refine: Option<&mut Refiner<'_>>,
) -> Result<IntegratedRemainder, WeylError> {
    if !(window > 0.0 && energy - window >= 0.0) {
        return Err(WeylError::InvalidParameter {
            name: "window",
            value: window,
            reason: "need 0 < M <= E",
        });
    }
    let (lo_level, hi_level) = (energy - window, energy + window);
    let mut dwells = Vec::new();
    let mut excluded = Vec::new();
    let mut max_residual: Option<f64> = None;
    for b in branches {
        let mut pts: Vec<(f64, f64, f64)> = b
            .samples
            .iter()
            .filter(|s| s.param.abs() <= tau0 * (1.0 + 1e-12))
            .map(|s| (s.param, s.eigenvalue, s.hf_slope))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let scale = pts.iter().map(|p| p.2.abs()).fold(0.0, f64::max);
        let increasing = pts.iter().all(|p| p.2 >= -1e-12 * scale);
        let decreasing = pts.iter().all(|p| p.2 <= 1e-12 * scale);
        if !(increasing || decreasing) || scale == 0.0 && pts.windows(2).any(|w| w[0].1 != w[1].1) {
            excluded.push(b.id);
            continue;
        }
        let mirrored = !decreasing;
        if mirrored {
            for p in pts.iter_mut() {
                p.0 = -p.0;
                p.2 = -p.2;
            }
            pts.reverse();
        }
        let dec = Decreasing { pts: &pts };
        let (mut enter, hi_inside) = dec.first_below(hi_level);
        let (mut exit, lo_inside) = dec.first_below(lo_level);
        if let Some(r) = refine.as_deref_mut() {
            let (a, z) = (pts[0].0, pts[pts.len() - 1].0);
            let sign = if mirrored { -1.0 } else { 1.0 };
            let mut polish = |tau: f64, level: f64| -> Result<f64, WeylError> {
                let mut hook = |id: usize, t: f64| r(id, sign * t).map(|(e, d)| (e, sign * d));
                let (t, res) = refine_root(&mut hook, b.id, tau, level, a, z)?;
                max_residual = Some(max_residual.map_or(res, |m: f64| m.max(res)));
                Ok(t)
            };
            if hi_inside {
                enter = polish(enter, hi_level)?;
            }
            if lo_inside {
                exit = polish(exit, lo_level)?;
            }
        }
        let length = (exit - enter).max(0.0);
        let (enter, exit) = if mirrored { (-exit, -enter) } else { (enter, exit) };
        dwells.push(Dwell {
            branch: b.id,
            enter,
            exit,
            length,
            crossings: hi_inside as usize + lo_inside as usize,
        });
    }
    Ok(IntegratedRemainder {
        energy,
        window,
        value: dwells.iter().map(|d| d.length).sum(),
        dwells,
        excluded_nonmonotone: excluded,
        max_refined_residual: max_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute deviation of `log y` from the fitted line.
    pub residual: f64,
    /// `+1` was added to every value because some were zero.
    pub offset_applied: bool,
}

/// Least-squares fit of `log y = slope · log E + intercept`.
///
/// Needs at least 6 energies spanning a factor 8. With `allow_offset`, zero
/// values shift every value by one (and the fit says so); otherwise they are
/// an error.
pub fn scaling_fit(energies: &[f64], values: &[f64], allow_offset: bool) -> Result<ScalingFit, WeylError> {
    let n = energies.len().min(values.len());
    let lo = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi / lo;
    if n < 6 || !(lo > 0.0) || span < 8.0 * (1.0 - 1e-12) {
        return Err(WeylError::FitRange {
            needed: 6,
            span: 8.0,
            have: n,
            have_span: span,
        });
    }
    let offset_applied = values.iter().any(|v| *v <= 0.0);
    if offset_applied && !allow_offset {
        return Err(WeylError::ZeroCounts);
    }
    let shift = if offset_applied { 1.0 } else { 0.0 };
    let xs: Vec<f64> = energies[..n].iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values[..n].iter().map(|v| (v + shift).ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(WeylError::ZeroCounts);
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).abs()).fold(0.0, f64::max);
    Ok(ScalingFit {
        slope,
        intercept,
        residual,
        offset_applied,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylConstantCheck {
    pub param: f64,
    /// `vol / 4π`.
    pub predicted: f64,
    pub worst_relative_error: f64,
    pub worst_energy: f64,
    pub energies: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Compares `N(E) / E` with `vol / 4π` on `points` equally spaced energies in
/// `[e_lo, e_hi]` and returns the worst relative error.
pub fn weyl_constant_check(snap: &SpectrumSnapshot, volume: f64, e_lo: f64, e_hi: f64, points: usize) -> Result<WeylConstantCheck, WeylError> {
    if !(e_lo > 0.0 && e_hi > e_lo) || points == 0 {
        return Err(WeylError::EmptyTrustedRange);
    }
    let predicted = volume / (4.0 * std::f64::consts::PI);
    let energies: Vec<f64> = if points == 1 {
        vec![e_hi]
    } else {
        (0..points).map(|k| e_lo + (e_hi - e_lo) * k as f64 / (points - 1) as f64).collect()
    };
    let mut ratios = Vec::with_capacity(points);
    let mut worst = (0.0, e_lo);
    for &e in &energies {
        let r = checked_count(snap, e)? as f64 / e;
        let err = (r - predicted).abs() / predicted;
        if err > worst.0 {
            worst = (err, e);
        }
        ratios.push(r);
    }
    Ok(WeylConstantCheck {
        param: snap.param,
        predicted,
        worst_relative_error: worst.0,
        worst_energy: worst.1,
        energies,
        ratios,
    })
}

/// `min |d ln E / dτ|` over branch samples with `E` in `[e_lo, e_hi]`.
pub fn measure_kappa(branches: &[Branch], e_lo: f64, e_hi: f64) -> Option<f64> {
    branches
        .iter()
        .flat_map(|b| b.samples.iter())
        .filter(|s| s.eigenvalue >= e_lo && s.eigenvalue <= e_hi && s.eigenvalue > 0.0)
        .map(|s| (s.hf_slope / s.eigenvalue).abs())
        .reduce(f64::min)
}

/// Longest possible stay in `(E - M, E + M]` for a branch with
/// `|d ln E / dτ| >= κ`.
pub fn dwell_bound(energy: f64, window: f64, kappa: f64) -> f64 {
    ((energy + window) / (energy - window)).ln() / kappa
}

/// Upper bound on the number of branches meeting the window: the count at
/// the end of the range where the branches are lowest.
pub fn contributing_bound(lowest_end: &SpectrumSnapshot, energy: f64, window: f64) -> Result<usize, WeylError> {
    checked_count(lowest_end, energy + window)
}
