//! Geometric-control verdicts for `{2f > ε}` on the flat torus.

use std::path::Path;

use eigenbranch_core::control::{check_control, ControlOptions};
use eigenbranch_core::torus::{assemble_family, TorusGrid};
use serde_json::json;

use super::Outcome;
use crate::config::ExperimentConfig;
use crate::output::{float, write_csv, Check};
use crate::LabError;

pub fn check(config: &ExperimentConfig, out: &Path) -> Result<Outcome, LabError> {
    let cfg = config.control();
    let grid = TorusGrid::new(cfg.points).map_err(|e| LabError::numerical("model_torus", e))?;
    let opts = ControlOptions {
        directions: cfg.directions,
        basepoints: cfg.basepoints,
        horizon: cfg.horizon,
        max_rational: cfg.max_rational,
        seed: config.seed,
    };
    let mut rows = Vec::new();
    let mut cases = Vec::new();
    let mut mismatches = Vec::new();
    let mut missing_certificates = 0;
    let mut repeat_differs = 0;
    for case in &cfg.cases {
        let fam = assemble_family(grid, case.profile, 0.0).map_err(|e| LabError::numerical("model_torus", e))?;
        let region = fam.control_region(case.epsilon).map_err(|e| LabError::numerical("model_torus", e))?;
        let verdict = check_control(&region, &opts).map_err(|e| LabError::numerical("control", e))?;
        if check_control(&region, &opts).map_err(|e| LabError::numerical("control", e))? != verdict {
            repeat_differs += 1;
        }
        if case.expect.is_some_and(|want| want != verdict.controlled) {
            mismatches.push(case.label.clone());
        }
        if !verdict.controlled && verdict.certificate.is_none() {
            missing_certificates += 1;
        }
        let cert = verdict.certificate;
        rows.push(vec![
            case.label.clone(),
            case.profile.name().to_string(),
            float(case.epsilon),
            verdict.controlled.to_string(),
            serde_json::to_value(verdict.evidence_kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            float(verdict.worst_direction[0]),
            float(verdict.worst_direction[1]),
            float(verdict.worst_miss_time),
            verdict.samples.to_string(),
            float(verdict.march_step),
            cert.map_or(String::new(), |c| float(c.basepoint[0])),
            cert.map_or(String::new(), |c| float(c.basepoint[1])),
            cert.and_then(|c| c.period).map_or(String::new(), float),
        ]);
        cases.push(json!({
            "label": case.label,
            "profile": case.profile,
            "epsilon": case.epsilon,
            "expect": case.expect,
            "region_nodes": region.node_count(),
            "verdict": verdict,
        }));
    }
    let failures = mismatches.len() + missing_certificates + repeat_differs;
    let checks = vec![Check::at_most(
        "control-verdicts",
        failures as f64,
        0.0,
        format!(
            "{} cases; mismatched: [{}]; uncontrolled without certificate: {missing_certificates}; verdicts changing on repeat: {repeat_differs}",
            cfg.cases.len(),
            mismatches.join(", ")
        ),
    )];
    let artifacts = vec![write_csv(
        out,
        "control.csv",
        &[
            "case",
            "profile",
            "epsilon",
            "controlled",
            "evidence",
            "direction_x",
            "direction_y",
            "worst_miss_time",
            "samples",
            "march_step",
            "certificate_x",
            "certificate_y",
            "certificate_period",
        ],
        &rows,
    )?];
    let summary = json!({ "points": cfg.points, "options": {
        "directions": opts.directions,
        "basepoints": opts.basepoints,
        "horizon": opts.horizon,
        "max_rational": opts.max_rational,
        "seed": opts.seed,
    }, "cases": cases });
    Ok((summary, checks, artifacts))
}
