//! Metrics CSV for `simulate` and `sweep`, and atomic file output.

use std::io::Write;
use std::path::Path;

use mediation_core::simulation::{Measure, SimulationError, SimulationMetrics, SimulationScenario};
use serde::Serialize;

use crate::error::CliError;

/// One CSV line. Coverage rates are percentages; blank cells mean "not
/// available" (no bootstrap, failed cell, too few replicates, no timing).
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRecord {
    pub scenario_id: String,
    pub case: String,
    pub n: usize,
    pub te: f64,
    pub mp: f64,
    /// Baseline outcome prevalence; blank for a continuous outcome.
    pub prevalence: Option<f64>,
    pub flavor: String,
    pub measure: String,
    pub truth: f64,
    pub bias_percent: Option<f64>,
    pub cr_delta: Option<f64>,
    pub cr_boot: Option<f64>,
    pub variance_ratio: Option<f64>,
    pub n_failed: Option<usize>,
    pub mean_cases: Option<f64>,
    pub status: String,
    pub wall_seconds: Option<f64>,
}

/// Rows for one scenario (or one sweep cell), in flavor-then-measure order.
pub fn metrics_records(
    scenario: &SimulationScenario,
    result: &Result<SimulationMetrics, SimulationError>,
    wall_seconds: Option<f64>,
) -> Vec<MetricsRecord> {
    let prevalence = scenario.case.y_binary().then_some(scenario.outcome_prevalence);
    let mut out = Vec::new();
    for &flavor in &scenario.flavors {
        for measure in [Measure::Nie, Measure::Mp] {
            let truth = match measure {
                Measure::Nie => scenario.true_nie(),
                Measure::Mp => scenario.mp,
            };
            let mut rec = MetricsRecord {
                scenario_id: scenario.id.clone(),
                case: scenario.case.to_string(),
                n: scenario.n,
                te: scenario.te,
                mp: scenario.mp,
                prevalence,
                flavor: flavor.name().to_string(),
                measure: measure.name().to_string(),
                truth,
                bias_percent: None,
                cr_delta: None,
                cr_boot: None,
                variance_ratio: None,
                n_failed: None,
                mean_cases: None,
                status: String::new(),
                wall_seconds,
            };
            match result {
                Ok(m) => {
                    let row = m.row(flavor, measure).expect("every flavor has a row per measure");
                    rec.bias_percent = Some(row.bias_percent);
                    rec.cr_delta = Some(100.0 * row.cr_delta);
                    rec.cr_boot = row.cr_boot.map(|c| 100.0 * c);
                    rec.variance_ratio = row.variance_ratio;
                    rec.n_failed = Some(m.n_failed);
                    rec.mean_cases = m.mean_cases;
                    rec.status = "ok".to_string();
                }
                Err(e) => {
                    if let SimulationError::TooManyFailures { failed, .. } = e {
                        rec.n_failed = Some(*failed);
                    }
                    rec.status = format!("failed: {e}");
                }
            }
            out.push(rec);
        }
    }
    out
}

pub fn to_csv(records: &[MetricsRecord]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io {
        path: "<buffer>".into(),
        source: e.into_error(),
    })
}

/// Write through a temporary file in the target directory and rename it into
/// place, so a failed run never leaves a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(CliError::io(dir))?;
    tmp.write_all(bytes).map_err(CliError::io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}
