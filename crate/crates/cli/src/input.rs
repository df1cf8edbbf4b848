//! CSV ingestion.

use std::path::Path;

use mediation_core::Dataset;

use crate::error::CliError;

/// Column roles for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct ColumnRoles {
    pub outcome: String,
    pub mediator: String,
    pub exposure: String,
    pub binary_outcome: bool,
    pub binary_mediator: bool,
    pub covariates_outcome: Vec<String>,
    pub covariates_mediator: Vec<String>,
}

/// Read a header-first, comma-delimited numeric file into a [`Dataset`].
///
/// Only the referenced columns are parsed. Empty cells and `NA` are rejected
/// as missing; binary-declared outcome or mediator columns must hold 0 or 1.
pub fn load_csv(path: &Path, roles: &ColumnRoles) -> Result<Dataset, CliError> {
    if !path.is_file() {
        return Err(CliError::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };

    // (name, index, must be binary)
    let mut wanted: Vec<(&str, usize, bool)> = vec![
        (&roles.outcome, position(&roles.outcome)?, roles.binary_outcome),
        (&roles.exposure, position(&roles.exposure)?, false),
        (&roles.mediator, position(&roles.mediator)?, roles.binary_mediator),
    ];
    for name in roles.covariates_outcome.iter().chain(&roles.covariates_mediator) {
        wanted.push((name, position(name)?, false));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (k, &(name, idx, binary)) in wanted.iter().enumerate() {
            let cell = record.get(idx).unwrap_or("");
            let value = parse_cell(cell, row, name)?;
            if binary && value != 0.0 && value != 1.0 {
                return Err(CliError::NonBinaryValue {
                    row,
                    column: name.to_string(),
                    value,
                });
            }
            columns[k].push(value);
        }
    }

    let mut columns = columns.into_iter();
    let (y, x, m) = (columns.next().unwrap(), columns.next().unwrap(), columns.next().unwrap());
    let w_outcome: Vec<Vec<f64>> = columns.by_ref().take(roles.covariates_outcome.len()).collect();
    let w_mediator: Vec<Vec<f64>> = columns.collect();
    Ok(Dataset::with_covariates(
        y,
        x,
        m,
        w_outcome,
        w_mediator,
        roles.binary_outcome,
        roles.binary_mediator,
    )?)
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64, CliError> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Err(CliError::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::NonNumericCell {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}
