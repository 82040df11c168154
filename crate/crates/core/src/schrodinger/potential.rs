use serde::{Deserialize, Serialize};

/// Built-in one-dimensional potential shapes. In two dimensions the
/// potential is the separable sum `V(x) + V(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialKind {
    Zero,
    Constant { value: f64 },
    /// `x^2`
    Harmonic,
    /// `(x^2 - 1)^2`
    DoubleWell,
    /// `(x^2 - 1)^2 + tilt * x`
    TiltedDoubleWell { tilt: f64 },
    /// `x^4`
    Quartic,
}

impl PotentialKind {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::Zero => "zero",
            PotentialKind::Constant { .. } => "constant",
            PotentialKind::Harmonic => "harmonic",
            PotentialKind::DoubleWell => "double-well",
            PotentialKind::TiltedDoubleWell { .. } => "tilted-double-well",
            PotentialKind::Quartic => "quartic",
        }
    }

    fn value(&self, x: f64) -> f64 {
        match *self {
            PotentialKind::Zero => 0.0,
            PotentialKind::Constant { value } => value,
            PotentialKind::Harmonic => x * x,
            PotentialKind::DoubleWell => (x * x - 1.0).powi(2),
            PotentialKind::TiltedDoubleWell { tilt } => (x * x - 1.0).powi(2) + tilt * x,
            PotentialKind::Quartic => x.powi(4),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match *self {
            PotentialKind::Zero | PotentialKind::Constant { .. } => 0.0,
            PotentialKind::Harmonic => 2.0 * x,
            PotentialKind::DoubleWell => 4.0 * x * (x * x - 1.0),
            PotentialKind::TiltedDoubleWell { tilt } => 4.0 * x * (x * x - 1.0) + tilt,
            PotentialKind::Quartic => 4.0 * x.powi(3),
        }
    }

    fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            PotentialKind::Zero | PotentialKind::Constant { .. } => 0.0,
            PotentialKind::Harmonic => 2.0,
            PotentialKind::DoubleWell | PotentialKind::TiltedDoubleWell { .. } => 12.0 * x * x - 4.0,
            PotentialKind::Quartic => 12.0 * x * x,
        }
    }

    /// Isolated critical points of the 1-D profile. Flat potentials have
    /// none: every point is critical and nothing is declared.
    fn critical_points_1d(&self) -> Vec<(f64, CriticalKind)> {
        match *self {
            PotentialKind::Zero | PotentialKind::Constant { .. } => vec![],
            PotentialKind::Harmonic | PotentialKind::Quartic => vec![(0.0, CriticalKind::Min)],
            PotentialKind::DoubleWell => vec![
                (-1.0, CriticalKind::Min),
                (0.0, CriticalKind::Max),
                (1.0, CriticalKind::Min),
            ],
            PotentialKind::TiltedDoubleWell { tilt } => {
                let mut roots = depressed_cubic_roots(-1.0, tilt / 4.0);
                for r in roots.iter_mut() {
                    // polish on V' = 4x^3 - 4x + tilt
                    for _ in 0..8 {
                        let d2 = self.second_derivative(*r);
                        if d2 == 0.0 {
                            break;
                        }
                        *r -= self.derivative(*r) / d2;
                    }
                }
                roots.sort_by(f64::total_cmp);
                roots
                    .into_iter()
                    .map(|x| {
                        let kind = if self.second_derivative(x) > 0.0 {
                            CriticalKind::Min
                        } else {
                            CriticalKind::Max
                        };
                        (x, kind)
                    })
                    .collect()
            }
        }
    }
}

/// Real roots of `x^3 + p x + q`.
fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    let disc = -(4.0 * p * p * p + 27.0 * q * q);
    if disc > 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let theta = ((3.0 * q) / (p * m)).acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    } else {
        // single real root (Cardano)
        let s = (q * q / 4.0 + p * p * p / 27.0).sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Min,
    Max,
    Saddle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    pub kind: CriticalKind,
}

/// A confining potential with its declared critical set.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    dim: usize,
    critical: Vec<CriticalPoint>,
}

impl Potential {
    /// `dim` must be 1 or 2.
    pub fn new(kind: PotentialKind, dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "potentials are 1-D or 2-D");
        let one = kind.critical_points_1d();
        let critical = if dim == 1 {
            one.iter()
                .map(|&(x, k)| CriticalPoint {
                    location: vec![x],
                    value: kind.value(x),
                    kind: k,
                })
                .collect()
        } else {
            let mut out = Vec::new();
            for &(x, kx) in &one {
                for &(y, ky) in &one {
                    let kind2 = match (kx, ky) {
                        (CriticalKind::Min, CriticalKind::Min) => CriticalKind::Min,
                        (CriticalKind::Max, CriticalKind::Max) => CriticalKind::Max,
                        _ => CriticalKind::Saddle,
                    };
                    out.push(CriticalPoint {
                        location: vec![x, y],
                        value: kind.value(x) + kind.value(y),
                        kind: kind2,
                    });
                }
            }
            out
        };
        Potential { kind, dim, critical }
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        x.iter().map(|&xi| self.kind.value(xi)).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&xi| self.kind.derivative(xi)).collect()
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical
    }

    /// Distinct critical values, ascending.
    pub fn critical_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.critical.iter().map(|c| c.value).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        v
    }

    /// Smallest declared critical value, or the potential at the origin for
    /// flat profiles.
    pub fn minimum(&self) -> f64 {
        self.critical
            .iter()
            .map(|c| c.value)
            .fold(f64::INFINITY, f64::min)
            .min(self.eval(&vec![0.0; self.dim]))
    }

    /// Smallest half-width `L` with `V >= level` on the boundary of the box
    /// `[-L, L]^d` along every axis direction, searched up to `max_extent`.
    pub fn confining_extent(&self, level: f64, max_extent: f64) -> Option<f64> {
        let ok = |l: f64| self.kind.value(l) >= level && self.kind.value(-l) >= level;
        let mut hi = 0.25;
        while !ok(hi) {
            hi *= 1.25;
            if hi > max_extent {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_critical_points_are_critical() {
        let kinds = [
            PotentialKind::Harmonic,
            PotentialKind::DoubleWell,
            PotentialKind::TiltedDoubleWell { tilt: 0.2 },
            PotentialKind::Quartic,
        ];
        for kind in kinds {
            for dim in [1, 2] {
                let v = Potential::new(kind, dim);
                assert!(!v.critical_points().is_empty());
                for c in v.critical_points() {
                    let g = v.gradient(&c.location);
                    let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!(gn <= 1e-8, "{kind:?} at {:?}: |grad| = {gn}", c.location);
                    assert!((v.eval(&c.location) - c.value).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn double_well_critical_values() {
        let v = Potential::new(PotentialKind::DoubleWell, 1);
        assert_eq!(v.critical_values(), vec![0.0, 1.0]);
        let v2 = Potential::new(PotentialKind::DoubleWell, 2);
        assert_eq!(v2.critical_values(), vec![0.0, 1.0, 2.0]);
        assert_eq!(v2.critical_points().iter().filter(|c| c.kind == CriticalKind::Saddle).count(), 4);
    }

    #[test]
    fn tilted_well_has_three_critical_points() {
        let v = Potential::new(PotentialKind::TiltedDoubleWell { tilt: 0.2 }, 1);
        let kinds: Vec<_> = v.critical_points().iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![CriticalKind::Min, CriticalKind::Max, CriticalKind::Min]);
        let vals: Vec<f64> = v.critical_points().iter().map(|c| c.value).collect();
        assert!(vals[0] < 0.0 && vals[2] > 0.0, "tilt lifts the right well: {vals:?}");
    }

    #[test]
    fn confining_extent_for_harmonic() {
        let v = Potential::new(PotentialKind::Harmonic, 1);
        let l = v.confining_extent(29.0, 100.0).unwrap();
        assert!((l - 29f64.sqrt()).abs() < 1e-9);
        assert!(Potential::new(PotentialKind::Zero, 1).confining_extent(1.0, 100.0).is_none());
    }
}
