//! Computable moments of the semiclassical limit of a Schrödinger branch:
//! the kinetic functional `t^2 ∫|∇u|^2`, the matching potential gap
//! `E - ∫V|u|^2`, and the share of `|u|^2` near the critical set of `V`.

use serde::Serialize;

use crate::branches::{Branch, BranchError};
use crate::schrodinger::{Potential, SchrodingerForms};
use crate::spectrum::{SpectralError, SpectrumSnapshot};

/// Default radius of the critical-set neighbourhood, in length units.
pub const DEFAULT_RADIUS: f64 = 0.3;

/// Fewest tail samples accepted by [`condition_c_estimator`].
pub const MIN_TAIL_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub t: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub potential_gap: f64,
    pub mass_near_critical: f64,
    pub radius: f64,
    /// The potential declares no critical points; `mass_near_critical` is 0.
    pub critical_set_empty: bool,
}

impl ConcentrationReport {
    /// `|kinetic - potential_gap|`, zero up to solver accuracy.
    pub fn identity_defect(&self) -> f64 {
        (self.kinetic - self.potential_gap).abs()
    }
}

pub fn report(forms: &SchrodingerForms, v: &Potential, snap: &SpectrumSnapshot, j: usize, radius: f64) -> Result<ConcentrationReport, SpectralError> {
    if !(radius > 0.0) {
        return Err(SpectralError::InvalidParameter {
            name: "radius",
            value: radius,
            reason: "must be positive",
        });
    }
    if j >= snap.len() {
        return Err(SpectralError::InvalidParameter {
            name: "j",
            value: j as f64,
            reason: "no such eigenpair in the snapshot",
        });
    }
    let t = snap.param;
    let u = &snap.vectors[j];
    let energy = snap.values[j];
    let kinetic = t * t * forms.gradient_energy(u);
    let potential_gap = energy - forms.potential_energy(u);
    let critical = v.critical_points();
    let grid = forms.grid();
    let mass = forms.mass_diagonal();
    let mut total = 0.0;
    let mut near = 0.0;
    for (i, (x, m)) in u.iter().zip(mass).enumerate() {
        let w = x * x * m;
        total += w;
        if !critical.is_empty() {
            let p = grid.point(i);
            let close = critical.iter().any(|c| {
                let d2: f64 = c.location.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
                d2 <= radius * radius
            });
            if close {
                near += w;
            }
        }
    }
    let mass_near_critical = if total > 0.0 { (near / total).clamp(0.0, 1.0) } else { 0.0 };
    Ok(ConcentrationReport {
        t,
        energy,
        kinetic,
        potential_gap,
        mass_near_critical,
        radius,
        critical_set_empty: critical.is_empty(),
    })
}

/// Smallest kinetic value `t^2 ∫|∇u|^2` over the smallest-`t` fraction of the
/// branch samples.
///
/// A value bounded away from zero is the numerical form of the lower bound
/// that rules out a non-critical limit; a value tending to zero is consistent
/// with the branch converging to a critical value.
pub fn condition_c_estimator(branch: &Branch, tail_fraction: f64) -> Result<f64, BranchError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(SpectralError::InvalidParameter {
            name: "tail_fraction",
            value: tail_fraction,
            reason: "must lie in (0, 1]",
        }
        .into());
    }
    let mut samples: Vec<(f64, f64)> = branch.samples.iter().map(|s| (s.param, s.param * s.param * s.gradient_energy)).collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let take = ((samples.len() as f64 * tail_fraction).ceil() as usize).min(samples.len());
    if take < MIN_TAIL_SAMPLES {
        return Err(BranchError::TooFewSamples {
            what: "condition (C) tail",
            needed: MIN_TAIL_SAMPLES,
            have: take,
        });
    }
    Ok(samples[..take].iter().map(|s| s.1).fold(f64::INFINITY, f64::min))
}

/// Rise `E(t_hi) - E(t_lo)` forced on a branch whose kinetic term stays above
/// `c`: the slope is then at least `2c / t`, so the rise is at least
/// `2c ln(t_hi / t_lo)`, which is unbounded as `t_lo → 0`.
pub fn forced_rise(c: f64, t_lo: f64, t_hi: f64) -> f64 {
    2.0 * c * (t_hi / t_lo).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branches::{integrated_slope, BranchSample, BranchStatus};

    fn synthetic(c: f64, t_lo: f64, steps: usize) -> Branch {
        // E(t) = 2c ln t + const, kinetic = t Ė / 2 = c
        let samples = (0..=steps)
            .map(|k| {
                let t = (t_lo.ln() * k as f64 / steps as f64).exp();
                BranchSample {
                    param: t,
                    eigenvalue: 2.0 * c * t.ln() + 10.0,
                    gradient_energy: c / (t * t),
                    hf_slope: 2.0 * c / t,
                    overlap: 1.0,
                    rank: 0,
                }
            })
            .collect();
        Branch {
            id: 0,
            samples,
            status: BranchStatus::Alive,
        }
    }

    #[test]
    fn synthetic_violation_blows_up() {
        let c = 0.25;
        let mut last = 0.0;
        for exp in [2, 4, 8, 16] {
            let t_lo = 10f64.powi(-exp);
            let b = synthetic(c, t_lo, 4000);
            assert!((condition_c_estimator(&b, 0.2).unwrap() - c).abs() < 1e-12);
            // slopes integrated from t = 1 down to t_lo
            let rise = -integrated_slope(&b);
            let want = forced_rise(c, t_lo, 1.0);
            assert!((rise - want).abs() < 1e-3 * want, "{rise} vs {want}");
            assert!(rise > 2.0 * last - 1e-9);
            last = rise;
        }
    }

    #[test]
    fn short_tail_is_rejected() {
        let b = synthetic(1.0, 0.1, 8);
        assert!(condition_c_estimator(&b, 0.2).is_err());
        assert!(condition_c_estimator(&b, 1.0).is_ok());
    }
}
