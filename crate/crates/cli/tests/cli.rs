use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eigenbranch_lab::{run, ExperimentConfig, Report};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigenbranch-lab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn nonpositive_t_min_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "critical-limits", "schrodinger": {"t_min": 0.0}}"#);
    let out = lab(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("schrodinger.t_min"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"experiment": "control-check", "control": {"points": 16, "horizons": 3}}"#);
    let out = lab(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizons"));
}

#[test]
fn validate_accepts_shipped_configs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let out = lab(&["validate", "--config", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        seen += 1;
    }
    assert!(seen >= 5);
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"experiment": "schrodinger-branches", "schrodinger": {"points": 8, "half_extent": 2.0, "branches": 12}}"#,
    );
    let out = lab(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("branches"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"experiment": "control-check", "seed": 1, "control": {"points": 16, "directions": 4, "basepoints": 3, "horizon": 60.0}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = lab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "9", "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = Report::read(&out_dir).unwrap();
    assert_eq!(report.seed, 9);
    assert_eq!(report.schema_version, 1);
    assert!(out_dir.join("control.csv").exists());
}

#[test]
fn flat_profile_integrates_to_constant_times_pointwise() {
    // τ-independent spectrum: the integral is 2τ0 R_M(0, E)
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment": "torus-weyl", "torus": {"points": 32, "profile": {"name": "zero"}, "tau_points": 11, "energies": 8}}"#,
    )
    .unwrap();
    let report = run(&cfg, dir.path()).unwrap();
    let tau0 = cfg.torus().tau0;
    let rows = read_csv(&dir.path().join("integrated.csv"));
    assert_eq!(rows.len(), 8);
    for row in rows {
        let interval: f64 = row[1].parse().unwrap();
        let quadrature: f64 = row[2].parse().unwrap();
        let pointwise: f64 = row[3].parse().unwrap();
        assert!((interval - 2.0 * tau0 * pointwise).abs() <= 1e-12, "{row:?}");
        assert!((quadrature - 2.0 * tau0 * pointwise).abs() <= 1e-12, "{row:?}");
    }
    assert!(report.check("remainder-cross-check").unwrap().passed);
    assert!(report.check("dwell-bound").unwrap().passed);
    // N is non-decreasing in E at every τ
    let counting = read_csv(&dir.path().join("counting.csv"));
    assert_eq!(counting.len(), 11 * 8);
    for chunk in counting.chunks(8) {
        let n: Vec<usize> = chunk.iter().map(|r| r[2].parse().unwrap()).collect();
        assert!(n.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn critical_limits_report_lists_every_branch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment": "critical-limits", "schrodinger": {"points": 300, "steps": 40, "branches": 6}}"#,
    )
    .unwrap();
    let report = run(&cfg, dir.path()).unwrap();
    let limits = report.summary["limits"].as_array().unwrap();
    assert_eq!(limits.len(), 6);
    for l in limits {
        assert!(l["estimate"].is_number());
        let nearest = l["nearest_critical_value"].as_f64().unwrap();
        assert!(nearest == 0.0 || nearest == 1.0);
    }
    assert!(dir.path().join("limits.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = ExperimentConfig::from_json(
        r#"{"experiment": "schrodinger-branches", "seed": 3, "schrodinger": {"points": 200, "steps": 20, "branches": 4, "potential": {"name": "tilted-double-well", "tilt": 0.2}}}"#,
    )
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run(&cfg, a.path()).unwrap();
    let rb = run(&cfg, b.path()).unwrap();
    assert_eq!(ra.artifacts, rb.artifacts);
    for art in &ra.artifacts {
        assert_eq!(fs::read(a.path().join(&art.file)).unwrap(), fs::read(b.path().join(&art.file)).unwrap());
    }
}
