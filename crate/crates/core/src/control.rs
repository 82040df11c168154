//! Geometric control on the flat torus by geodesic sampling.
//!
//! Geodesics of the flat square torus are straight lines mod `2π`. A region
//! controls if every geodesic enters it in finite time. We march a sample of
//! geodesics: every rational direction `(p, q)` with `|p|, |q| <= 8` (the
//! closed ones, which are the ones that can avoid a region forever) plus
//! seeded irrational directions, from the origin and seeded basepoints.
//!
//! A miss along a closed geodesic over one full period is a certificate of
//! non-control. A hit on every sample is evidence, not proof.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::torus::ControlRegion;

/// Default horizon, 200 side lengths.
pub const DEFAULT_HORIZON: f64 = 200.0 * 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid {name}: {reason}")]
    InvalidOption { name: &'static str, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOptions {
    /// Seeded irrational directions added to the rational ones.
    pub directions: usize,
    /// Basepoints, the origin included.
    pub basepoints: usize,
    pub horizon: f64,
    /// Largest `|p|, |q|` of the rational directions.
    pub max_rational: i64,
    pub seed: u64,
}

impl Default for ControlOptions {
    fn default() -> Self {
        ControlOptions {
            directions: 32,
            basepoints: 16,
            horizon: DEFAULT_HORIZON,
            max_rational: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceKind {
    /// All sampled geodesics entered the region.
    Sampled,
    /// An explicit geodesic that misses the region.
    Certificate,
}

/// A geodesic that stays outside the region up to `horizon`. When `period`
/// is set the geodesic is closed and was followed over a whole period, so it
/// misses the region for all time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MissCertificate {
    pub basepoint: [f64; 2],
    pub direction: [f64; 2],
    pub horizon: f64,
    pub period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlVerdict {
    pub controlled: bool,
    pub evidence_kind: EvidenceKind,
    /// Direction of the slowest geodesic to enter (controlled) or of the
    /// certificate (uncontrolled).
    pub worst_direction: [f64; 2],
    /// Longest entry time among the samples; the horizon for a miss.
    pub worst_miss_time: f64,
    pub samples: usize,
    pub march_step: f64,
    pub certificate: Option<MissCertificate>,
}

#[derive(Debug, Clone, Copy)]
struct Geodesic {
    basepoint: [f64; 2],
    direction: [f64; 2],
    period: Option<f64>,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive integer directions up to sign, as unit vectors with periods.
fn rational_directions(max: i64) -> Vec<([f64; 2], f64)> {
    let mut out = Vec::new();
    for p in 0..=max {
        for q in -max..=max {
            if (p == 0 && q <= 0) || gcd(p, q) != 1 {
                continue;
            }
            let len = ((p * p + q * q) as f64).sqrt();
            out.push(([p as f64 / len, q as f64 / len], 2.0 * PI * len));
        }
    }
    out
}

fn sample_plan(opts: &ControlOptions) -> Vec<Geodesic> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basepoints = vec![[0.0, 0.0]];
    while basepoints.len() < opts.basepoints {
        basepoints.push([rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)]);
    }
    let mut dirs: Vec<([f64; 2], Option<f64>)> = rational_directions(opts.max_rational).into_iter().map(|(d, p)| (d, Some(p))).collect();
    for _ in 0..opts.directions {
        let a: f64 = rng.gen_range(0.0..PI);
        dirs.push(([a.cos(), a.sin()], None));
    }
    let mut plan = Vec::with_capacity(dirs.len() * basepoints.len());
    for &(direction, period) in &dirs {
        for &basepoint in &basepoints {
            plan.push(Geodesic {
                basepoint,
                direction,
                period,
            });
        }
    }
    plan
}

/// First time the geodesic is found inside, if before `limit`.
fn entry_time(region: &ControlRegion, g: &Geodesic, step: f64, limit: f64) -> Option<f64> {
    let steps = (limit / step).ceil() as usize;
    (0..=steps).map(|k| (k as f64 * step).min(limit)).find(|&s| {
        region.contains(g.basepoint[0] + s * g.direction[0], g.basepoint[1] + s * g.direction[1])
    })
}

pub fn check_control(region: &ControlRegion, opts: &ControlOptions) -> Result<ControlVerdict, ControlError> {
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) {
        return Err(ControlError::InvalidOption {
            name: "horizon",
            reason: "must be positive and finite",
        });
    }
    if opts.basepoints == 0 {
        return Err(ControlError::InvalidOption {
            name: "basepoints",
            reason: "need at least one",
        });
    }
    if opts.max_rational < 1 {
        return Err(ControlError::InvalidOption {
            name: "max_rational",
            reason: "need at least the axis directions",
        });
    }
    let h = region.grid().spacing();
    let step = region.inradius().map_or(0.5 * h, |r| (0.5 * r).min(0.5 * h)).max(1e-6 * h);
    if region.is_empty() {
        let direction = [1.0, 0.0];
        return Ok(ControlVerdict {
            controlled: false,
            evidence_kind: EvidenceKind::Certificate,
            worst_direction: direction,
            worst_miss_time: opts.horizon,
            samples: 0,
            march_step: step,
            certificate: Some(MissCertificate {
                basepoint: [0.0, 0.0],
                direction,
                horizon: opts.horizon,
                period: Some(2.0 * PI),
            }),
        });
    }
    let plan = sample_plan(opts);
    let results: Vec<Option<f64>> = plan
        .par_iter()
        .map(|g| {
            // a closed geodesic repeats itself after one period
            let limit = g.period.map_or(opts.horizon, |p| p.min(opts.horizon));
            entry_time(region, g, step, limit)
        })
        .collect();
    // first miss in plan order, preferring closed geodesics (listed first)
    if let Some(i) = results.iter().position(|r| r.is_none()) {
        let g = plan[i];
        let horizon = g.period.map_or(opts.horizon, |p| p.min(opts.horizon));
        return Ok(ControlVerdict {
            controlled: false,
            evidence_kind: EvidenceKind::Certificate,
            worst_direction: g.direction,
            worst_miss_time: opts.horizon,
            samples: plan.len(),
            march_step: step,
            certificate: Some(MissCertificate {
                basepoint: g.basepoint,
                direction: g.direction,
                horizon,
                period: g.period.filter(|p| *p <= opts.horizon),
            }),
        });
    }
    let (worst, time) = results
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.expect("all hit")))
        .fold((0, f64::NEG_INFINITY), |acc, (i, t)| if t > acc.1 { (i, t) } else { acc });
    Ok(ControlVerdict {
        controlled: true,
        evidence_kind: EvidenceKind::Sampled,
        worst_direction: plan[worst].direction,
        worst_miss_time: time,
        samples: plan.len(),
        march_step: step,
        certificate: None,
    })
}
