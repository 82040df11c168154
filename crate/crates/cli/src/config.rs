//! Experiment configuration, read from a single JSON file.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use eigenbranch_core::control::DEFAULT_HORIZON;
use eigenbranch_core::schrodinger::PotentialKind;
use eigenbranch_core::torus::Profile;
use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SchrodingerBranches,
    CriticalLimits,
    TorusWeyl,
    ControlCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SchrodingerBranches => "schrodinger-branches",
            ExperimentKind::CriticalLimits => "critical-limits",
            ExperimentKind::TorusWeyl => "torus-weyl",
            ExperimentKind::ControlCheck => "control-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` overrides it.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub schrodinger: Option<SchrodingerConfig>,
    #[serde(default)]
    pub torus: Option<TorusWeylConfig>,
    #[serde(default)]
    pub control: Option<ControlConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Geometric,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchrodingerConfig {
    pub dim: usize,
    pub potential: PotentialKind,
    /// Grid points per axis.
    pub points: usize,
    /// Box half-width; chosen from the potential when absent.
    pub half_extent: Option<f64>,
    pub t_max: f64,
    pub t_min: f64,
    pub steps: usize,
    pub spacing: Spacing,
    pub branches: usize,
    /// Finite-difference step relative to `t`.
    pub fd_step: f64,
    pub hf_tolerance: f64,
    /// Relative gap below which a sample is treated as degenerate and left
    /// out of the slope comparison.
    pub degenerate_gap: f64,
    pub identity_tolerance: f64,
    pub monotonicity_slack: f64,
    pub radius: f64,
    pub tail_fraction: f64,
    pub limit_tolerance: f64,
    /// Share of branches required to extrapolate to the potential minimum.
    pub minimum_fraction: f64,
    /// Harmonic potential only: allowed `|E_j - (2j+1)t| / (2j+1)`.
    pub oracle_tolerance: f64,
}

impl Default for SchrodingerConfig {
    fn default() -> Self {
        SchrodingerConfig {
            dim: 1,
            potential: PotentialKind::DoubleWell,
            points: 600,
            half_extent: None,
            t_max: 1.0,
            t_min: 0.02,
            steps: 60,
            spacing: Spacing::Geometric,
            branches: 10,
            fd_step: 1e-4,
            hf_tolerance: 1e-3,
            degenerate_gap: 1e-9,
            identity_tolerance: 1e-8,
            monotonicity_slack: 1e-10,
            radius: 0.3,
            tail_fraction: 0.2,
            limit_tolerance: 0.1,
            minimum_fraction: 0.9,
            oracle_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorusWeylConfig {
    /// Grid points per axis (even).
    pub points: usize,
    pub profile: Profile,
    pub tau0: f64,
    pub tau_points: usize,
    /// Window half-width `M`.
    pub window: f64,
    /// Fit range; defaults to `[e_max / 8, trust cutoff - M]`.
    pub e_min: Option<f64>,
    pub e_max: Option<f64>,
    pub energies: usize,
    /// Re-solve at every window crossing to polish the roots.
    pub refine: bool,
    pub weyl_points: usize,
    pub weyl_tolerance: f64,
    pub integrated_slope_max: f64,
    pub pointwise_slope_min: f64,
    pub dwell_slack: f64,
}

impl Default for TorusWeylConfig {
    fn default() -> Self {
        TorusWeylConfig {
            points: 64,
            profile: Profile::Cosine { amplitude: 0.3 },
            tau0: 0.2,
            tau_points: 41,
            window: 0.5,
            e_min: None,
            e_max: None,
            energies: 12,
            refine: false,
            weyl_points: 32,
            weyl_tolerance: 0.1,
            integrated_slope_max: 0.15,
            pointwise_slope_min: 0.3,
            dwell_slack: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlCase {
    pub label: String,
    pub profile: Profile,
    pub epsilon: f64,
    /// Expected verdict, if any.
    #[serde(default)]
    pub expect: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub points: usize,
    pub cases: Vec<ControlCase>,
    pub directions: usize,
    pub basepoints: usize,
    pub horizon: f64,
    pub max_rational: i64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            points: 64,
            cases: vec![
                ControlCase {
                    label: "cosine".into(),
                    profile: Profile::Cosine { amplitude: 0.3 },
                    epsilon: 0.5,
                    expect: Some(true),
                },
                ControlCase {
                    label: "strip".into(),
                    profile: Profile::Strip {
                        center: PI,
                        half_width: 0.5,
                        height: 1.0,
                    },
                    epsilon: 0.5,
                    expect: Some(false),
                },
            ],
            directions: 32,
            basepoints: 16,
            horizon: DEFAULT_HORIZON,
            max_rational: 8,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> LabError {
    LabError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<(), LabError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn unit_interval(field: &str, v: f64) -> Result<(), LabError> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in (0, 1], got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A config with default parameters for `experiment`.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            experiment,
            seed: 0,
            output: None,
            schrodinger: None,
            torus: None,
            control: None,
        };
        match experiment {
            ExperimentKind::SchrodingerBranches | ExperimentKind::CriticalLimits => cfg.schrodinger = Some(Default::default()),
            ExperimentKind::TorusWeyl => cfg.torus = Some(Default::default()),
            ExperimentKind::ControlCheck => cfg.control = Some(Default::default()),
        }
        cfg
    }

    pub fn schrodinger(&self) -> SchrodingerConfig {
        self.schrodinger.clone().unwrap_or_default()
    }

    pub fn torus(&self) -> TorusWeylConfig {
        self.torus.clone().unwrap_or_default()
    }

    pub fn control(&self) -> ControlConfig {
        self.control.clone().unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let uses = |section: &str| match self.experiment {
            ExperimentKind::SchrodingerBranches | ExperimentKind::CriticalLimits => section == "schrodinger",
            ExperimentKind::TorusWeyl => section == "torus",
            ExperimentKind::ControlCheck => section == "control",
        };
        for (name, present) in [
            ("schrodinger", self.schrodinger.is_some()),
            ("torus", self.torus.is_some()),
            ("control", self.control.is_some()),
        ] {
            if present && !uses(name) {
                return Err(invalid(name, format!("section is not used by experiment {}", self.experiment.name())));
            }
        }
        match self.experiment {
            ExperimentKind::SchrodingerBranches | ExperimentKind::CriticalLimits => self.schrodinger().validate(),
            ExperimentKind::TorusWeyl => self.torus().validate(),
            ExperimentKind::ControlCheck => self.control().validate(),
        }
    }
}

impl SchrodingerConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        if !(self.dim == 1 || self.dim == 2) {
            return Err(invalid("schrodinger.dim", format!("must be 1 or 2, got {}", self.dim)));
        }
        if self.points < 8 {
            return Err(invalid("schrodinger.points", "need at least 8 points per axis"));
        }
        if self.dim == 2 && self.points > 64 {
            return Err(invalid("schrodinger.points", "two-dimensional grids use the dense solver; keep points <= 64"));
        }
        if let Some(l) = self.half_extent {
            positive("schrodinger.half_extent", l)?;
        }
        positive("schrodinger.t_min", self.t_min)?;
        positive("schrodinger.t_max", self.t_max)?;
        if self.t_min >= self.t_max {
            return Err(invalid("schrodinger.t_min", format!("must be below t_max = {}", self.t_max)));
        }
        if self.steps < 2 {
            return Err(invalid("schrodinger.steps", "need at least 2 steps"));
        }
        if self.branches == 0 {
            return Err(invalid("schrodinger.branches", "track at least one branch"));
        }
        positive("schrodinger.fd_step", self.fd_step)?;
        if self.fd_step >= 0.5 {
            return Err(invalid("schrodinger.fd_step", "relative step must be below 0.5"));
        }
        positive("schrodinger.hf_tolerance", self.hf_tolerance)?;
        if !(self.degenerate_gap >= 0.0) {
            return Err(invalid("schrodinger.degenerate_gap", "must be non-negative"));
        }
        positive("schrodinger.identity_tolerance", self.identity_tolerance)?;
        if !(self.monotonicity_slack >= 0.0) {
            return Err(invalid("schrodinger.monotonicity_slack", "must be non-negative"));
        }
        positive("schrodinger.radius", self.radius)?;
        unit_interval("schrodinger.tail_fraction", self.tail_fraction)?;
        positive("schrodinger.limit_tolerance", self.limit_tolerance)?;
        unit_interval("schrodinger.minimum_fraction", self.minimum_fraction)?;
        positive("schrodinger.oracle_tolerance", self.oracle_tolerance)
    }
}

impl TorusWeylConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        if self.points < 8 || self.points % 2 != 0 {
            return Err(invalid("torus.points", format!("must be even and at least 8, got {}", self.points)));
        }
        positive("torus.tau0", self.tau0)?;
        if self.tau_points < 3 || self.tau_points % 2 == 0 {
            return Err(invalid("torus.tau_points", "need an odd count of at least 3 so that the grid contains 0"));
        }
        positive("torus.window", self.window)?;
        let (e_min, e_max) = self.energy_range();
        if let Some(e) = self.e_min {
            positive("torus.e_min", e)?;
        }
        if let Some(e) = self.e_max {
            positive("torus.e_max", e)?;
        }
        if e_min - self.window <= 0.0 {
            return Err(invalid("torus.e_min", format!("E - M must stay positive, got {e_min} with M = {}", self.window)));
        }
        if e_max <= e_min {
            return Err(invalid("torus.e_max", format!("must exceed e_min = {e_min}")));
        }
        let trust = self.trust_cutoff();
        if e_max + self.window > trust * (1.0 + 1e-12) {
            return Err(invalid(
                "torus.e_max",
                format!("E + M = {} exceeds the trust cutoff {trust}", e_max + self.window),
            ));
        }
        if self.energies < 2 {
            return Err(invalid("torus.energies", "need at least 2 energies"));
        }
        if self.weyl_points == 0 {
            return Err(invalid("torus.weyl_points", "need at least one energy"));
        }
        positive("torus.weyl_tolerance", self.weyl_tolerance)?;
        if !self.integrated_slope_max.is_finite() {
            return Err(invalid("torus.integrated_slope_max", "must be finite"));
        }
        if !self.pointwise_slope_min.is_finite() {
            return Err(invalid("torus.pointwise_slope_min", "must be finite"));
        }
        if !(self.dwell_slack >= 0.0) {
            return Err(invalid("torus.dwell_slack", "must be non-negative"));
        }
        let lo = self.profile_min();
        let worst = (1.0 + self.tau0 * lo).min(1.0 - self.tau0 * self.profile_max());
        if worst <= 0.0 {
            return Err(invalid("torus.tau0", format!("metric factor 1 + τf reaches {worst} on the grid")));
        }
        Ok(())
    }

    /// `0.5 / Δx^2`.
    pub fn trust_cutoff(&self) -> f64 {
        let h = 2.0 * PI / self.points as f64;
        0.5 / (h * h)
    }

    pub fn energy_range(&self) -> (f64, f64) {
        let e_max = self.e_max.unwrap_or(self.trust_cutoff() - self.window);
        let e_min = self.e_min.unwrap_or(e_max / 8.0);
        (e_min, e_max)
    }

    fn profile_values(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.points.max(1);
        let h = 2.0 * PI / n as f64;
        (0..n * n).map(move |i| self.profile.eval((i % n) as f64 * h, (i / n) as f64 * h))
    }

    fn profile_min(&self) -> f64 {
        self.profile_values().fold(f64::INFINITY, f64::min)
    }

    fn profile_max(&self) -> f64 {
        self.profile_values().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        if self.points < 8 || self.points % 2 != 0 {
            return Err(invalid("control.points", format!("must be even and at least 8, got {}", self.points)));
        }
        if self.cases.is_empty() {
            return Err(invalid("control.cases", "need at least one case"));
        }
        for (i, c) in self.cases.iter().enumerate() {
            if !(c.epsilon > 0.0 && c.epsilon.is_finite()) {
                return Err(invalid(&format!("control.cases[{i}].epsilon"), format!("must be positive, got {}", c.epsilon)));
            }
        }
        if self.basepoints == 0 {
            return Err(invalid("control.basepoints", "need at least one basepoint"));
        }
        positive("control.horizon", self.horizon)?;
        if self.max_rational < 1 {
            return Err(invalid("control.max_rational", "need at least 1"));
        }
        Ok(())
    }
}
