//! Monte Carlo harness: data-generating designs for the four cases, replicate
//! runs, and bias / coverage / variance-ratio summaries.
//!
//! Exposure is `X ~ Bernoulli(0.5)` throughout. A continuous mediator is
//! `M = γ0 + γ1 X + ε` with unit-variance `ε`; a binary mediator follows a
//! logistic model. The outcome is normal with unit variance (Cases 1–2) or
//! logistic (Cases 3–4). Coefficients are solved from the (TE, MP) targets for
//! the contrast `x* = 0 → x = 1` by [`solve_design`].

mod design;
mod generate;
mod run;

use thiserror::Error;

use crate::inference::BootstrapConfig;
use crate::measures::{CaseType, Flavor, DEFAULT_GHQ_NODES};

pub use design::{solve_design, DesignParams};
pub use generate::generate;
pub use run::{
    prevalence_sweep, run_scenario, run_scenario_with, Measure, MetricRow, SimulationMetrics,
    SweepCell,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid scenario field `{field}`: {message}")]
    InvalidScenario { field: &'static str, message: String },
    #[error("design solver failed for {case}: residual {residual:e} after {iterations} iterations")]
    SolverFailure {
        case: CaseType,
        iterations: usize,
        residual: f64,
    },
    #[error("{failed} of {replications} replications failed (limit 5%)")]
    TooManyFailures { failed: usize, replications: usize },
}

/// One Monte Carlo cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationScenario {
    /// Free-form label carried into output rows.
    pub id: String,
    pub case: CaseType,
    pub n: usize,
    /// Target total effect on the case's scale.
    pub te: f64,
    /// Target mediation proportion, in (0, 1).
    pub mp: f64,
    /// `P(Y = 1 | X = 0, M = 0)`; binary-outcome cases only.
    pub outcome_prevalence: f64,
    /// `P(M = 1 | X = 0)`; binary-mediator cases only.
    pub mediator_prevalence: f64,
    pub xm_correlation: f64,
    /// Skewness of the mediator error; 0 means normal errors.
    pub error_skewness: f64,
    pub replications: usize,
    pub seed: u64,
    /// Flavors to estimate; every flavor admissible for `case` by default.
    pub flavors: Vec<Flavor>,
    pub level: f64,
    pub ghq_nodes: usize,
    pub bootstrap: Option<BootstrapConfig>,
}

impl SimulationScenario {
    pub fn new(case: CaseType, n: usize, te: f64, mp: f64) -> Self {
        Self {
            id: format!("{case}"),
            case,
            n,
            te,
            mp,
            outcome_prevalence: 0.03,
            mediator_prevalence: 0.2,
            xm_correlation: 0.2,
            error_skewness: 0.0,
            replications: 1000,
            seed: 1,
            flavors: case.flavors().to_vec(),
            level: 0.95,
            ghq_nodes: DEFAULT_GHQ_NODES,
            bootstrap: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |field: &'static str, message: String| Err(SimulationError::InvalidScenario { field, message });
        if self.n < 4 {
            return bad("n", format!("need at least 4 records, got {}", self.n));
        }
        if !self.te.is_finite() || self.te == 0.0 {
            return bad("te", format!("must be finite and non-zero, got {}", self.te));
        }
        if !(self.mp > 0.0 && self.mp < 1.0) {
            return bad("mp", format!("must lie in (0, 1), got {}", self.mp));
        }
        if !(self.outcome_prevalence > 0.0 && self.outcome_prevalence < 1.0) {
            return bad("outcome_prevalence", format!("must lie in (0, 1), got {}", self.outcome_prevalence));
        }
        if !(self.mediator_prevalence > 0.0 && self.mediator_prevalence < 1.0) {
            return bad("mediator_prevalence", format!("must lie in (0, 1), got {}", self.mediator_prevalence));
        }
        if !(self.xm_correlation > -1.0 && self.xm_correlation < 1.0) || self.xm_correlation == 0.0 {
            return bad("xm_correlation", format!("must lie in (-1, 1) and be non-zero, got {}", self.xm_correlation));
        }
        if !(self.error_skewness >= 0.0 && self.error_skewness.is_finite()) {
            return bad("error_skewness", format!("must be finite and non-negative, got {}", self.error_skewness));
        }
        if self.error_skewness > 0.0 && self.case.m_binary() {
            return bad("error_skewness", "only applies to a continuous mediator".to_string());
        }
        if self.replications == 0 {
            return bad("replications", "must be positive".to_string());
        }
        if self.flavors.is_empty() {
            return bad("flavors", "at least one flavor is required".to_string());
        }
        if let Some(f) = self.flavors.iter().find(|f| !self.case.admits(**f)) {
            return bad("flavors", format!("`{f}` is not defined for {}", self.case));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level", format!("must lie in (0, 1), got {}", self.level));
        }
        if self.ghq_nodes < 2 {
            return bad("ghq_nodes", format!("need at least 2, got {}", self.ghq_nodes));
        }
        if let Some(cfg) = &self.bootstrap {
            cfg.validate()
                .map_err(|e| SimulationError::InvalidScenario { field: "bootstrap", message: e.to_string() })?;
        }
        Ok(())
    }

    /// True NIE for the `0 → 1` contrast.
    pub fn true_nie(&self) -> f64 {
        self.mp * self.te
    }
}
