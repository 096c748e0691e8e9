use std::path::{Path, PathBuf};

use radsim_core::calibration::CalibrationError;
use radsim_core::geometry::GeometryError;
use radsim_core::imaging::PgmError;
use radsim_core::metrics::MetricError;
use radsim_core::tracer::TraceError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Trajectory { path: PathBuf, line: usize, message: String },
    #[error("mesh {}: {source}", path.display())]
    Mesh { path: PathBuf, source: GeometryError },
    #[error("{0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: PgmError },
    #[error(transparent)]
    Simulation(#[from] TraceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("csv {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    /// Stable category name for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config { .. } => "config",
            CliError::Trajectory { .. } => "trajectory",
            CliError::Mesh { .. } => "mesh",
            CliError::Input(_) => "input",
            CliError::Image { .. } => "image",
            CliError::Simulation(_) => "simulation",
            CliError::Metric(_) => "metric",
            CliError::Calibration(_) => "calibration",
            CliError::Csv { .. } => "csv",
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
        move |source| CliError::Csv { path: path.to_path_buf(), source }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl std::fmt::Display) -> CliError {
        CliError::Config { field: field.into(), message: message.to_string() }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
