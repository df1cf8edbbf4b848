use std::path::PathBuf;

use mediation_core::simulation::SimulationError;
use mediation_core::{DataError, FitError, InferenceError, MeasureError};
use thiserror::Error;

/// Everything the front end can fail with. Rows are 1-based data rows (the
/// header is not counted).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("column `{0}` is not in the header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: missing value (missing data is not imputed)")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column `{column}`: declared binary but holds {value}")]
    NonBinaryValue { row: usize, column: String, value: f64 },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot parse {}: {message}", path.display())]
    ScenarioFile { path: PathBuf, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("model fit failed: {0}")]
    Fit(#[from] FitError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

impl CliError {
    /// Process exit status: 2 input/config, 3 fit, 4 bootstrap, 5 design solver.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Fit(_) => 3,
            CliError::Inference(e) => match e {
                InferenceError::BootstrapInstability { .. } => 4,
                InferenceError::Fit(_) | InferenceError::NonFiniteGradient { .. } => 3,
                InferenceError::InvalidConfig(_) | InferenceError::Measure(_) => 2,
            },
            CliError::Simulation(e) => match e {
                SimulationError::InvalidScenario { .. } => 2,
                SimulationError::SolverFailure { .. } => 5,
                // too many replicates could not be fitted
                SimulationError::TooManyFailures { .. } => 3,
            },
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
