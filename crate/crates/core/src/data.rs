//! Columnar mediation datasets.

use thiserror::Error;

use crate::measures::CaseType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("column `{column}` has {found} values, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{column}` row {row}: value is not finite")]
    NonFinite { column: String, row: usize },
    #[error("column `{column}` row {row}: binary column holds {value}, expected 0 or 1")]
    NonBinary {
        column: String,
        row: usize,
        value: f64,
    },
    #[error("{n} records cannot identify a model with {params} parameters (need at least {required})")]
    TooFewRecords {
        n: usize,
        params: usize,
        required: usize,
    },
}

/// Records of `(Y, X, M, W)` with declared binary/continuous roles.
///
/// Covariates are stored per model: the outcome and mediator regressions may
/// adjust for different columns. [`Dataset::new`] uses one shared set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<f64>,
    m: Vec<f64>,
    w_outcome: Vec<Vec<f64>>,
    w_mediator: Vec<Vec<f64>>,
    y_binary: bool,
    m_binary: bool,
}

impl Dataset {
    /// Dataset whose outcome and mediator models share the covariate columns `w`.
    pub fn new(
        y: Vec<f64>,
        x: Vec<f64>,
        m: Vec<f64>,
        w: Vec<Vec<f64>>,
        y_binary: bool,
        m_binary: bool,
    ) -> Result<Self, DataError> {
        Self::with_covariates(y, x, m, w.clone(), w, y_binary, m_binary)
    }

    /// Dataset with separate covariate columns for the outcome and mediator models.
    pub fn with_covariates(
        y: Vec<f64>,
        x: Vec<f64>,
        m: Vec<f64>,
        w_outcome: Vec<Vec<f64>>,
        w_mediator: Vec<Vec<f64>>,
        y_binary: bool,
        m_binary: bool,
    ) -> Result<Self, DataError> {
        let n = y.len();
        check_column("y", &y, n, y_binary)?;
        check_column("x", &x, n, false)?;
        check_column("m", &m, n, m_binary)?;
        for (j, col) in w_outcome.iter().enumerate() {
            check_column(&format!("w_outcome[{j}]"), col, n, false)?;
        }
        for (j, col) in w_mediator.iter().enumerate() {
            check_column(&format!("w_mediator[{j}]"), col, n, false)?;
        }
        let p = w_outcome.len().max(w_mediator.len());
        // the outcome model carries p + 3 coefficients
        if n < p + 3 {
            return Err(DataError::TooFewRecords {
                n,
                params: p + 3,
                required: p + 3,
            });
        }
        Ok(Self {
            y,
            x,
            m,
            w_outcome,
            w_mediator,
            y_binary,
            m_binary,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn w_outcome(&self) -> &[Vec<f64>] {
        &self.w_outcome
    }

    pub fn w_mediator(&self) -> &[Vec<f64>] {
        &self.w_mediator
    }

    pub fn p_outcome(&self) -> usize {
        self.w_outcome.len()
    }

    pub fn p_mediator(&self) -> usize {
        self.w_mediator.len()
    }

    pub fn y_binary(&self) -> bool {
        self.y_binary
    }

    pub fn m_binary(&self) -> bool {
        self.m_binary
    }

    pub fn case(&self) -> CaseType {
        CaseType::from_flags(self.y_binary, self.m_binary)
    }

    /// Number of records with `Y = 1`; `None` for a continuous outcome.
    pub fn outcome_cases(&self) -> Option<usize> {
        self.y_binary
            .then(|| self.y.iter().filter(|&&v| v == 1.0).count())
    }

    /// New dataset made of the records at `indices` (repeats allowed), in that order.
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        let pick = |col: &[f64]| indices.iter().map(|&i| col[i]).collect::<Vec<_>>();
        Dataset {
            y: pick(&self.y),
            x: pick(&self.x),
            m: pick(&self.m),
            w_outcome: self.w_outcome.iter().map(|c| pick(c)).collect(),
            w_mediator: self.w_mediator.iter().map(|c| pick(c)).collect(),
            y_binary: self.y_binary,
            m_binary: self.m_binary,
        }
    }
}

fn check_column(name: &str, col: &[f64], n: usize, binary: bool) -> Result<(), DataError> {
    if col.len() != n {
        return Err(DataError::LengthMismatch {
            column: name.to_string(),
            expected: n,
            found: col.len(),
        });
    }
    for (row, &v) in col.iter().enumerate() {
        if !v.is_finite() {
            return Err(DataError::NonFinite {
                column: name.to_string(),
                row,
            });
        }
        if binary && v != 0.0 && v != 1.0 {
            return Err(DataError::NonBinary {
                column: name.to_string(),
                row,
                value: v,
            });
        }
    }
    Ok(())
}
