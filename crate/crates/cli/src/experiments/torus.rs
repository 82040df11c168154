//! Counting functions and integrated Weyl remainders of a conformal torus
//! family.

use std::f64::consts::PI;
use std::path::Path;

use eigenbranch_core::branches::sorted_branches;
use eigenbranch_core::linalg::SubspaceOptions;
use eigenbranch_core::spectrum::{SpectralError, SpectralFamily, SpectrumSnapshot};
use eigenbranch_core::torus::{assemble_family, ConformalFamily, TorusGrid, ZERO_MODE_TOL};
use eigenbranch_core::weyl::{
    contributing_bound, count, dwell_bound, integrated_remainder, measure_kappa, scaling_fit, weyl_constant_check, CountingTable,
    IntegratedRemainder, Refiner, ScalingFit,
};
use rayon::prelude::*;
use serde_json::json;

use super::Outcome;
use crate::config::{ExperimentConfig, TorusWeylConfig};
use crate::output::{float, write_csv, Check};
use crate::LabError;

/// Energy of the lattice spot check.
const SPOT_ENERGY: f64 = 10.0;

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a * (b / a).powf(k as f64 / (n - 1) as f64)).collect()
}

/// `#{(a, b) in Z^2 : a^2 + b^2 <= e}`, the flat-torus count.
fn lattice_count(e: f64) -> usize {
    let r = e.sqrt().floor() as i64;
    (-r..=r)
        .flat_map(|a| (-r..=r).map(move |b| (a * a + b * b) as f64))
        .filter(|m| *m <= e)
        .count()
}

/// Solves at every `τ` with enough pairs to cover `e_need`, then makes sure
/// every snapshot holds at least as many pairs as the largest count below
/// `e_label`, so that sorted labels are defined on the whole `τ` range.
fn solve_grid(fam: &ConformalFamily, taus: &[f64], e_need: f64, e_label: f64) -> Result<Vec<SpectrumSnapshot>, SpectralError> {
    let size = fam.dim();
    let vol_max = taus.iter().map(|&t| fam.volume(t)).fold(0.0, f64::max);
    let mut want = ((1.3 * vol_max / (4.0 * PI) * e_need).ceil() as usize + 20).min(size);
    loop {
        let snaps: Vec<SpectrumSnapshot> = taus.par_iter().map(|&t| fam.solve(t, want)).collect::<Result<_, _>>()?;
        let covered = snaps.iter().all(|s| s.complete_below > e_need || s.len() == size);
        let labels = snaps.iter().map(|s| count(s, e_label)).max().unwrap_or(0);
        let defined = snaps.iter().all(|s| s.len() > labels || s.len() == size);
        if (covered && defined) || want == size {
            return Ok(snaps);
        }
        want = (2 * want).min(size);
    }
}

fn fit_or_null(fit: &Result<ScalingFit, eigenbranch_core::weyl::WeylError>) -> serde_json::Value {
    match fit {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn weyl(config: &ExperimentConfig, out: &Path) -> Result<Outcome, LabError> {
    let cfg: TorusWeylConfig = config.torus();
    let numerical = |e: SpectralError| LabError::numerical("model_torus", e);
    let weyl_err = |e| LabError::numerical("weyl", e);
    let grid = TorusGrid::new(cfg.points).map_err(numerical)?;
    let mut fam = assemble_family(grid, cfg.profile, cfg.tau0).map_err(numerical)?;
    fam.set_subspace_options(SubspaceOptions {
        seed: config.seed,
        ..Default::default()
    });
    let m = cfg.window;
    let taus = linspace(-cfg.tau0, cfg.tau0, cfg.tau_points);
    let (e_min, e_max) = cfg.energy_range();
    let energies = geomspace(e_min, e_max, cfg.energies);
    let trust = grid.trust_cutoff();
    let snaps = solve_grid(&fam, &taus, (e_max + m).max(trust), e_max + m).map_err(numerical)?;
    let mid = taus.len() / 2;

    let table = CountingTable::from_snapshots(&snaps, &energies, m).map_err(weyl_err)?;
    let labels = snaps.iter().map(|s| count(s, e_max + m)).max().unwrap_or(0);
    // the constant mode sits at E = 0 with round-off slopes of either sign
    let mut branches = sorted_branches(&fam, &snaps, labels);
    let zero_modes = branches.iter().filter(|b| b.samples.iter().all(|s| s.eigenvalue.abs() <= ZERO_MODE_TOL)).count();
    branches.retain(|b| !b.samples.iter().all(|s| s.eigenvalue.abs() <= ZERO_MODE_TOL));

    // branch-interval measure per energy, with optional re-solve polishing
    let mut results: Vec<IntegratedRemainder> = Vec::with_capacity(energies.len());
    for &e in &energies {
        let mut hook = |j: usize, tau: f64| -> Result<(f64, f64), SpectralError> {
            let s = fam.solve(tau, j + 1)?;
            Ok((s.values[j], fam.hf_slope(&s, j)))
        };
        let refine: Option<&mut Refiner<'_>> = if cfg.refine { Some(&mut hook) } else { None };
        results.push(integrated_remainder(&branches, cfg.tau0, e, m, refine).map_err(weyl_err)?);
    }

    // two-method cross-check
    let h = table.tau_step();
    let mut cross_worst = 0.0f64;
    for (k, r) in results.iter().enumerate() {
        let bound = h * r.crossings() as f64 + 1e-12;
        cross_worst = cross_worst.max((table.integrated[k] - r.value).abs() / bound);
    }

    let integrated: Vec<f64> = results.iter().map(|r| r.value).collect();
    let pointwise: Vec<f64> = table.remainders[mid].iter().map(|&r| r as f64).collect();
    let integrated_fit = scaling_fit(&energies, &integrated, true);
    let quadrature_fit = scaling_fit(&energies, &table.integrated, true);
    let pointwise_fit = scaling_fit(&energies, &pointwise, true);

    // proof-side bounds
    let kappa = measure_kappa(&branches, e_min - m, e_max + m).unwrap_or(0.0);
    let mut dwell_excess = f64::NEG_INFINITY;
    let mut dwells = 0;
    for r in &results {
        let bound = dwell_bound(r.energy, m, kappa);
        for d in &r.dwells {
            dwell_excess = dwell_excess.max(d.length - bound);
            dwells += 1;
        }
    }
    let mean_slope: f64 = branches.iter().flat_map(|b| b.samples.iter()).map(|s| s.hf_slope).sum();
    let decreasing = mean_slope <= 0.0;
    let lowest_end = if decreasing { snaps.last() } else { snaps.first() }.expect("tau grid is non-empty");
    let mut count_excess = i64::MIN;
    for r in &results {
        let bound = contributing_bound(lowest_end, r.energy, m).map_err(weyl_err)?;
        count_excess = count_excess.max(r.contributing() as i64 - bound as i64);
    }

    let weyl = weyl_constant_check(&snaps[mid], fam.volume(taus[mid]), trust / 2.0, trust, cfg.weyl_points).map_err(weyl_err)?;
    let spot = (SPOT_ENERGY < trust).then(|| (count(&snaps[mid], SPOT_ENERGY), lattice_count(SPOT_ENERGY)));

    let mut checks = Vec::new();
    let weyl_passed = weyl.worst_relative_error <= cfg.weyl_tolerance && spot.map_or(true, |(a, b)| a == b);
    checks.push(Check {
        name: "weyl-constant".into(),
        passed: weyl_passed,
        measured: weyl.worst_relative_error,
        tolerance: cfg.weyl_tolerance,
        detail: format!(
            "worst |N(E)/E - vol/4π| / (vol/4π) on {} energies in [{:.4}, {:.4}] at τ = {}, worst at E = {:.4}; N({SPOT_ENERGY}) = {} vs lattice {}",
            cfg.weyl_points,
            trust / 2.0,
            trust,
            taus[mid],
            weyl.worst_energy,
            spot.map_or("-".into(), |s| s.0.to_string()),
            spot.map_or("-".into(), |s| s.1.to_string()),
        ),
    });
    let slope = |f: &Result<ScalingFit, _>| f.as_ref().map_or(f64::NAN, |f| f.slope);
    let integrated_slope = slope(&integrated_fit);
    let pointwise_slope = slope(&pointwise_fit);
    checks.push(Check {
        name: "integrated-remainder-slope".into(),
        passed: integrated_slope <= cfg.integrated_slope_max,
        measured: integrated_slope,
        tolerance: cfg.integrated_slope_max,
        detail: format!(
            "log-log slope of the τ-integrated windowed count over E in [{e_min:.4}, {e_max:.4}] (quadrature fit slope {:.4})",
            slope(&quadrature_fit)
        ),
    });
    checks.push(Check {
        name: "pointwise-remainder-slope".into(),
        passed: pointwise_slope >= cfg.pointwise_slope_min,
        measured: pointwise_slope,
        tolerance: cfg.pointwise_slope_min,
        detail: format!("log-log slope of the windowed count at τ = {} over the same energies", taus[mid]),
    });
    checks.push(Check::at_most(
        "remainder-cross-check",
        cross_worst,
        1.0,
        format!("worst |quadrature - interval measure| in units of the resolution bound {h:.4e} per crossing"),
    ));
    checks.push(Check::at_most(
        "dwell-bound",
        dwell_excess.max(0.0),
        cfg.dwell_slack,
        format!("largest dwell length minus ln((E+M)/(E-M))/κ over {dwells} dwells, κ = {kappa:.6e}"),
    ));
    checks.push(Check::at_most(
        "branch-count-bound",
        count_excess.max(0) as f64,
        0.0,
        format!(
            "contributing branches minus N at τ = {} (E + M)",
            if decreasing { cfg.tau0 } else { -cfg.tau0 }
        ),
    ));

    let mut counting_rows = Vec::new();
    for (i, &tau) in table.taus.iter().enumerate() {
        for (k, &e) in table.energies.iter().enumerate() {
            counting_rows.push(vec![float(tau), float(e), table.counts[i][k].to_string(), table.remainders[i][k].to_string()]);
        }
    }
    let (fit_lo, fit_hi) = (e_min * (1.0 - 1e-12), e_max * (1.0 + 1e-12));
    let integrated_rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(k, r)| {
            vec![
                float(r.energy),
                float(r.value),
                float(table.integrated[k]),
                float(pointwise[k]),
                r.crossings().to_string(),
                r.contributing().to_string(),
                r.excluded_nonmonotone.len().to_string(),
                ((fit_lo..=fit_hi).contains(&r.energy) as u8).to_string(),
            ]
        })
        .collect();
    let artifacts = vec![
        write_csv(out, "counting.csv", &["tau", "E", "N", "R_M"], &counting_rows)?,
        write_csv(
            out,
            "integrated.csv",
            &["E", "integrated_interval", "integrated_quadrature", "pointwise", "crossings", "contributing", "excluded", "in_fit"],
            &integrated_rows,
        )?,
    ];

    let summary = json!({
        "grid": { "points": cfg.points, "spacing": grid.spacing(), "trust_cutoff": trust },
        "profile": cfg.profile,
        "tau0": cfg.tau0,
        "tau_points": cfg.tau_points,
        "window": m,
        "energy_threshold": e_min - m,
        "energies": energies,
        "branches": labels,
        "zero_modes": zero_modes,
        "pairs_per_solve": snaps.iter().map(|s| s.len()).max(),
        "orientation": if decreasing { "decreasing" } else { "increasing" },
        "kappa": kappa,
        "refined": cfg.refine,
        "max_refined_residual": results.iter().filter_map(|r| r.max_refined_residual).reduce(f64::max),
        "excluded_nonmonotone": results.iter().map(|r| r.excluded_nonmonotone.len()).max(),
        "fits": {
            "integrated": fit_or_null(&integrated_fit),
            "quadrature": fit_or_null(&quadrature_fit),
            "pointwise": fit_or_null(&pointwise_fit),
        },
        "weyl": weyl,
        "spot_check": spot.map(|(n, lattice)| json!({ "energy": SPOT_ENERGY, "count": n, "lattice": lattice })),
        "volume": taus.iter().map(|&t| fam.volume(t)).collect::<Vec<_>>(),
    });
    Ok((summary, checks, artifacts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_oracle() {
        assert_eq!(lattice_count(0.5), 1);
        assert_eq!(lattice_count(1.0), 5);
        assert_eq!(lattice_count(10.0), 37);
    }

    #[test]
    fn grids() {
        let t = linspace(-0.2, 0.2, 41);
        assert_eq!(t[20], 0.0);
        let e = geomspace(2.0, 16.0, 4);
        assert!((e[3] - 16.0).abs() < 1e-12 && (e[1] - 4.0).abs() < 1e-12);
    }
}
