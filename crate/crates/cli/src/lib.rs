//! Experiment driver: reads a JSON config, runs one of the canned
//! experiments and writes CSV artifacts plus `report.json`.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind};
pub use output::{Check, Report};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure in {module}: {message}")]
    Numerical { module: &'static str, message: String },
}

impl LabError {
    pub fn numerical(module: &'static str, err: impl std::fmt::Display) -> Self {
        LabError::Numerical {
            module,
            message: err.to_string(),
        }
    }

    /// Process exit status: 2 for bad configs, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } | LabError::Parse(_) => 2,
            LabError::Numerical { .. } => 3,
            LabError::Io { .. } => 1,
        }
    }
}

/// Runs the configured experiment, writing artifacts into `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<Report, LabError> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|source| LabError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let (summary, checks, artifacts) = match config.experiment {
        ExperimentKind::SchrodingerBranches => experiments::schrodinger::branches(config, out)?,
        ExperimentKind::CriticalLimits => experiments::schrodinger::critical_limits(config, out)?,
        ExperimentKind::TorusWeyl => experiments::torus::weyl(config, out)?,
        ExperimentKind::ControlCheck => experiments::control::check(config, out)?,
    };
    let report = Report {
        schema_version: output::SCHEMA_VERSION,
        experiment: config.experiment.name().to_string(),
        seed: config.seed,
        config: config.clone(),
        summary,
        checks,
        artifacts,
    };
    report.write(out)?;
    Ok(report)
}

/// [`run`] inside a dedicated pool of `threads` workers.
pub fn run_with_threads(config: &ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<Report, LabError> {
    match threads {
        None => run(config, out),
        Some(0) => Err(LabError::Config {
            field: "--threads".into(),
            reason: "must be at least 1".into(),
        }),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| LabError::Config {
                field: "--threads".into(),
                reason: e.to_string(),
            })?
            .install(|| run(config, out)),
    }
}
