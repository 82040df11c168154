//! CSV artifacts and the machine-readable run report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::LabError;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One pass/fail line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            passed: measured <= tolerance,
            measured,
            tolerance,
            detail: detail.into(),
        }
    }

    /// Passes when `measured >= tolerance`.
    pub fn at_least(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            passed: measured >= tolerance,
            measured,
            tolerance,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl Report {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn read(dir: &Path) -> Result<Self, LabError> {
        let path = dir.join(REPORT_FILE);
        let text = fs::read_to_string(&path).map_err(|source| LabError::Io { path, source })?;
        serde_json::from_str(&text).map_err(|e| LabError::Parse(e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, LabError> {
        let path = dir.join(REPORT_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| LabError::Parse(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|source| LabError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

/// Writes `name` under `dir` and returns its checksum entry.
pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<Artifact, LabError> {
    let path = dir.join(name);
    let io = |e: csv::Error| LabError::Io {
        path: path.clone(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io {
        path: path.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    fs::write(&path, &bytes).map_err(|source| LabError::Io { path: path.clone(), source })?;
    Ok(Artifact {
        file: name.to_string(),
        bytes: bytes.len() as u64,
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    })
}
