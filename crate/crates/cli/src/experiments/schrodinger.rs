//! Branch tracking for `-t²Δ + V`, and the `t → 0` limit experiment.

use std::collections::BTreeMap;
use std::path::Path;

use eigenbranch_core::branches::{continue_branches, limit_estimate, Continuation, SweepPlan};
use eigenbranch_core::concentration::{condition_c_estimator, forced_rise, report, ConcentrationReport};
use eigenbranch_core::schrodinger::{Grid, Potential, PotentialKind, SchrodingerFamily};
use eigenbranch_core::spectrum::{SpectralFamily, SpectrumSnapshot};
use serde_json::json;

use super::Outcome;
use crate::config::{ExperimentConfig, SchrodingerConfig, Spacing};
use crate::output::{float, write_csv, Artifact, Check};
use crate::LabError;

/// Pairs solved beyond the tracked branches when sizing the box.
const SIZING_GUARD: usize = 4;

struct Tracked {
    family: SchrodingerFamily,
    run: Continuation,
    /// Every accepted snapshot, keyed by the bits of its parameter.
    snapshots: BTreeMap<u64, SpectrumSnapshot>,
    first_param: f64,
    last_param: f64,
}

impl Tracked {
    fn snapshot(&self, t: f64) -> &SpectrumSnapshot {
        &self.snapshots[&t.to_bits()]
    }
}

fn grid_for(cfg: &SchrodingerConfig, potential: &Potential) -> Result<Grid, LabError> {
    let numerical = |e| LabError::numerical("model_schrodinger", e);
    if let Some(l) = cfg.half_extent {
        return Grid::new(cfg.dim, l, cfg.points).map_err(numerical);
    }
    // grow the box until it holds every tracked level at the largest t
    let count = cfg.branches + SIZING_GUARD;
    let mut level = potential.minimum() + 10.0 * cfg.t_max * count as f64;
    for _ in 0..20 {
        let grid = Grid::for_potential(potential, cfg.points, level).map_err(|e| LabError::Config {
            field: "schrodinger.half_extent".into(),
            reason: e.to_string(),
        })?;
        let family = SchrodingerFamily::new(&grid, potential.clone()).map_err(numerical)?;
        let snap = family.solve(cfg.t_max, count.min(family.dim())).map_err(numerical)?;
        let e_max = *snap.values.last().expect("count >= 1");
        if e_max <= level {
            return Ok(grid);
        }
        level = 2.0 * e_max;
    }
    Err(LabError::Config {
        field: "schrodinger.half_extent".into(),
        reason: "automatic box sizing did not settle; set it explicitly".into(),
    })
}

fn track(cfg: &SchrodingerConfig) -> Result<Tracked, LabError> {
    let potential = Potential::new(cfg.potential, cfg.dim);
    let grid = grid_for(cfg, &potential)?;
    let family = SchrodingerFamily::new(&grid, potential).map_err(|e| LabError::numerical("model_schrodinger", e))?;
    let plan = match cfg.spacing {
        Spacing::Geometric => SweepPlan::geometric(cfg.t_max, cfg.t_min, cfg.steps, cfg.branches),
        Spacing::Linear => SweepPlan::linear(cfg.t_max, cfg.t_min, cfg.steps, cfg.branches),
    }
    .map_err(|e| LabError::numerical("branches", e))?;
    let mut snapshots = BTreeMap::new();
    let run = continue_branches(&family, &plan, |s| {
        snapshots.insert(s.param.to_bits(), s.clone());
    })
    .map_err(|e| LabError::numerical("branches", e))?;
    Ok(Tracked {
        family,
        run,
        snapshots,
        first_param: cfg.t_max,
        last_param: cfg.t_min,
    })
}

/// Worst `|t²∫|∇u|² + ∫V|u|² - E| / (1 + |E|)` over every computed pair.
fn energy_identity(tr: &Tracked) -> (f64, usize) {
    let forms = tr.family.forms();
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for snap in tr.snapshots.values() {
        let t = snap.param;
        for (e, u) in snap.values.iter().zip(&snap.vectors) {
            let lhs = t * t * forms.gradient_energy(u) + forms.potential_energy(u);
            worst = worst.max((lhs - e).abs() / (1.0 + e.abs()));
            pairs += 1;
        }
    }
    (worst, pairs)
}

fn monotonicity(tr: &Tracked, slack: f64) -> (usize, f64) {
    let mut violations = 0;
    let mut worst = 0.0f64;
    for b in &tr.run.branches {
        for w in b.samples.windows(2) {
            let rise = (w[1].eigenvalue - w[0].eigenvalue) * (w[1].param - w[0].param).signum();
            if rise < -slack {
                violations += 1;
            }
            worst = worst.max(-rise);
        }
        for s in &b.samples {
            if s.hf_slope < -slack {
                violations += 1;
            }
        }
    }
    (violations, worst)
}

fn concentration_rows(tr: &Tracked, radius: f64) -> Result<Vec<(usize, ConcentrationReport)>, LabError> {
    let mut rows = Vec::new();
    for b in &tr.run.branches {
        for s in &b.samples {
            let r = report(tr.family.forms(), tr.family.potential(), tr.snapshot(s.param), s.rank, radius)
                .map_err(|e| LabError::numerical("concentration", e))?;
            rows.push((b.id, r));
        }
    }
    Ok(rows)
}

fn write_concentration(out: &Path, rows: &[(usize, ConcentrationReport)]) -> Result<Artifact, LabError> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(id, r)| {
            vec![
                id.to_string(),
                float(r.t),
                float(r.energy),
                float(r.kinetic),
                float(r.potential_gap),
                float(r.mass_near_critical),
                float(r.identity_defect()),
            ]
        })
        .collect();
    write_csv(
        out,
        "concentration.csv",
        &["branch_id", "t", "E", "kinetic", "potential_gap", "mass_near_critical", "identity_defect"],
        &body,
    )
}

fn write_branches(out: &Path, tr: &Tracked, fd: &BTreeMap<(usize, u64), f64>) -> Result<Artifact, LabError> {
    let mut body = Vec::new();
    for b in &tr.run.branches {
        for s in &b.samples {
            let t = s.param;
            body.push(vec![
                b.id.to_string(),
                float(t),
                float(s.eigenvalue),
                float(s.gradient_energy),
                float(s.hf_slope),
                float(s.overlap),
                fd.get(&(b.id, t.to_bits())).map_or(String::new(), |v| float(*v)),
                float(t * t * s.gradient_energy),
                s.rank.to_string(),
            ]);
        }
    }
    write_csv(
        out,
        "branches.csv",
        &["branch_id", "param", "eigenvalue", "gradient_energy", "hf_slope", "overlap", "fd_slope", "kinetic", "rank"],
        &body,
    )
}

fn branch_summaries(tr: &Tracked) -> serde_json::Value {
    tr.run
        .branches
        .iter()
        .map(|b| {
            json!({
                "id": b.id,
                "status": b.status,
                "samples": b.samples.len(),
                "first_eigenvalue": b.samples[0].eigenvalue,
                "last_eigenvalue": b.last().eigenvalue,
            })
        })
        .collect()
}

fn common_checks(cfg: &SchrodingerConfig, tr: &Tracked) -> (Vec<Check>, serde_json::Value) {
    let (identity, pairs) = energy_identity(tr);
    let (violations, worst_drop) = monotonicity(tr, cfg.monotonicity_slack);
    let checks = vec![
        Check::at_most(
            "energy-identity",
            identity,
            cfg.identity_tolerance,
            format!("worst relative defect over {pairs} eigenpairs"),
        ),
        Check::at_most(
            "monotonicity",
            violations as f64,
            0.0,
            format!("decreases beyond {:e}; largest drop {worst_drop:e}", cfg.monotonicity_slack),
        ),
    ];
    let summary = json!({
        "energy_identity": { "worst": identity, "pairs": pairs },
        "monotonicity": { "violations": violations, "largest_drop": worst_drop },
    });
    (checks, summary)
}

fn grid_summary(tr: &Tracked, cfg: &SchrodingerConfig) -> serde_json::Value {
    let g = tr.family.forms().grid();
    json!({
        "dim": g.dim(),
        "points": g.points_per_axis(),
        "half_extent": g.half_extent(),
        "spacing": g.spacing(),
        "potential": cfg.potential,
        "critical_values": tr.family.potential().critical_values(),
    })
}

/// Tracks branches from `t_max` down to `t_min` and verifies slopes, the
/// energy identity and monotonicity.
pub fn branches(config: &ExperimentConfig, out: &Path) -> Result<Outcome, LabError> {
    let cfg = config.schrodinger();
    let tr = track(&cfg)?;
    let numerical = |e| LabError::numerical("branches", e);

    // centred differences of the sorted eigenvalues, one pair of solves per t
    let max_rank = tr.run.branches.iter().flat_map(|b| b.samples.iter().map(|s| s.rank)).max().unwrap_or(0);
    let mut fd = BTreeMap::new();
    let mut fd_cache: BTreeMap<u64, (Vec<f64>, Vec<f64>, f64)> = BTreeMap::new();
    let mut checked = 0usize;
    let mut excluded = 0usize;
    let mut worst = (0.0f64, 0usize, f64::NAN);
    let mut worst_all = 0.0f64;
    for b in &tr.run.branches {
        for s in &b.samples {
            let t = s.param;
            if t == tr.first_param || t == tr.last_param {
                continue;
            }
            if !fd_cache.contains_key(&t.to_bits()) {
                let h = cfg.fd_step * t;
                let plus = tr.family.solve(t + h, max_rank + 1).map_err(numerical)?;
                let minus = tr.family.solve(t - h, max_rank + 1).map_err(numerical)?;
                fd_cache.insert(t.to_bits(), (plus.values, minus.values, h));
            }
            let (plus, minus, h) = &fd_cache[&t.to_bits()];
            let slope = (plus[s.rank] - minus[s.rank]) / (2.0 * h);
            fd.insert((b.id, t.to_bits()), slope);
            let snap = tr.snapshot(t);
            let e = snap.values[s.rank];
            let gap = [s.rank.checked_sub(1), Some(s.rank + 1)]
                .into_iter()
                .flatten()
                .filter(|&k| k < snap.len())
                .map(|k| (snap.values[k] - e).abs())
                .fold(f64::INFINITY, f64::min);
            let err = (s.hf_slope - slope).abs() / (1.0 + s.hf_slope.abs());
            worst_all = worst_all.max(err);
            if gap < cfg.degenerate_gap * (1.0 + e.abs()) {
                excluded += 1;
                continue;
            }
            checked += 1;
            if err > worst.0 {
                worst = (err, b.id, t);
            }
        }
    }

    let (mut checks, common) = common_checks(&cfg, &tr);
    checks.insert(
        0,
        Check::at_most(
            "hellmann-feynman",
            worst.0,
            cfg.hf_tolerance,
            format!(
                "worst |hf - fd| / (1 + |hf|) over {checked} interior samples (branch {} at t = {}); {excluded} near-degenerate samples excluded",
                worst.1, worst.2
            ),
        ),
    );

    let rows = concentration_rows(&tr, cfg.radius)?;
    let mut harmonic = serde_json::Value::Null;
    if cfg.potential == PotentialKind::Harmonic && cfg.dim == 1 {
        // E_j(t) = (2j + 1) t and kinetic = E / 2 on the whole line
        let mut value_err = 0.0f64;
        let mut virial_err = 0.0f64;
        let mut samples = 0;
        for (id, r) in &rows {
            if *id >= 8 || r.t < 0.05 * (1.0 - 1e-12) || r.t > 1.0 * (1.0 + 1e-12) {
                continue;
            }
            let scale = (2 * id + 1) as f64;
            value_err = value_err.max((r.energy - scale * r.t).abs() / scale);
            virial_err = virial_err.max((r.kinetic - r.energy / 2.0).abs() / scale);
            samples += 1;
        }
        let worst = value_err.max(virial_err);
        checks.push(Check::at_most(
            "harmonic-oracle",
            worst,
            cfg.oracle_tolerance,
            format!("max over {samples} samples of |E - (2j+1)t| / (2j+1) = {value_err:e} and |kinetic - E/2| / (2j+1) = {virial_err:e}"),
        ));
        harmonic = json!({ "value_error": value_err, "virial_error": virial_err, "samples": samples });
    }

    let artifacts = vec![write_branches(out, &tr, &fd)?, write_concentration(out, &rows)?];
    let summary = json!({
        "grid": grid_summary(&tr, &cfg),
        "branches": branch_summaries(&tr),
        "identity_permutation": tr.run.identity_permutation,
        "halvings": tr.run.halvings,
        "hellmann_feynman": {
            "checked": checked,
            "excluded_near_degenerate": excluded,
            "worst": worst.0,
            "worst_branch": worst.1,
            "worst_t": worst.2,
            "worst_including_degenerate": worst_all,
        },
        "harmonic": harmonic,
        "checks": common,
    });
    Ok((summary, checks, artifacts))
}

/// Tracks branches towards `t = 0` and compares their limits with the
/// critical values of the potential.
pub fn critical_limits(config: &ExperimentConfig, out: &Path) -> Result<Outcome, LabError> {
    let cfg = config.schrodinger();
    let tr = track(&cfg)?;
    let critical = tr.family.potential().critical_values();
    let minimum = critical.first().copied().unwrap_or_else(|| tr.family.potential().minimum());
    let rows = concentration_rows(&tr, cfg.radius)?;

    let mut limits = Vec::new();
    let mut body = Vec::new();
    let mut worst_alive = 0.0f64;
    let mut alive = 0;
    let mut near_minimum = 0;
    for b in &tr.run.branches {
        let est = limit_estimate(b).map_err(|e| LabError::numerical("branches", e))?;
        let (nearest, distance) = critical
            .iter()
            .map(|c| (*c, (est.value - c).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((f64::NAN, f64::INFINITY));
        let c_est = condition_c_estimator(b, cfg.tail_fraction).ok();
        let t_end = b.last().param;
        let mass = rows
            .iter()
            .find(|(id, r)| *id == b.id && r.t == t_end)
            .map(|(_, r)| r.mass_near_critical)
            .unwrap_or(f64::NAN);
        if b.is_alive() {
            alive += 1;
            worst_alive = worst_alive.max(distance);
        }
        if (est.value - minimum).abs() <= cfg.limit_tolerance {
            near_minimum += 1;
        }
        body.push(vec![
            b.id.to_string(),
            if b.is_alive() { "alive".into() } else { "lost".into() },
            float(est.value),
            float(est.width),
            est.samples.to_string(),
            float(nearest),
            float(distance),
            c_est.map_or(String::new(), float),
            float(mass),
        ]);
        limits.push(json!({
            "branch": b.id,
            "alive": b.is_alive(),
            "estimate": est.value,
            "width": est.width,
            "samples": est.samples,
            "nearest_critical_value": nearest,
            "distance": distance,
            "condition_c": c_est,
            "forced_rise": c_est.map(|c| forced_rise(c, cfg.t_min, cfg.t_max)),
            "mass_near_critical": mass,
        }));
    }
    let fraction = near_minimum as f64 / tr.run.branches.len() as f64;
    let (mut checks, common) = common_checks(&cfg, &tr);
    let limit_ok = worst_alive <= cfg.limit_tolerance && fraction >= cfg.minimum_fraction;
    checks.insert(
        0,
        Check {
            name: "critical-limits".into(),
            passed: limit_ok,
            measured: worst_alive,
            tolerance: cfg.limit_tolerance,
            detail: format!(
                "{alive} alive branches, worst distance to a critical value {worst_alive:.3e}; {near_minimum}/{} extrapolate to the minimum {minimum} (need share >= {})",
                tr.run.branches.len(),
                cfg.minimum_fraction
            ),
        },
    );

    let artifacts = vec![
        write_branches(out, &tr, &BTreeMap::new())?,
        write_concentration(out, &rows)?,
        write_csv(
            out,
            "limits.csv",
            &[
                "branch_id",
                "status",
                "estimate",
                "width",
                "samples",
                "nearest_critical_value",
                "distance",
                "condition_c",
                "mass_near_critical",
            ],
            &body,
        )?,
    ];
    let summary = json!({
        "grid": grid_summary(&tr, &cfg),
        "branches": branch_summaries(&tr),
        "identity_permutation": tr.run.identity_permutation,
        "halvings": tr.run.halvings,
        "critical_values": critical,
        "limits": limits,
        "alive": alive,
        "fraction_near_minimum": fraction,
        "checks": common,
    });
    Ok((summary, checks, artifacts))
}
