//! TOML scenario files for `simulate` and `sweep`.
//!
//! ```toml
//! id = "case1-n5000"
//! case = 1
//! n = 5000
//! te = 1.0
//! mp = 0.5
//! replications = 1000
//! seed = 1
//!
//! [bootstrap]          # optional
//! replications = 500
//! ```
//!
//! A sweep file is the same document plus `prevalences = [0.03, 0.1, ...]`.

use std::path::Path;

use mediation_core::simulation::SimulationScenario;
use mediation_core::{BootstrapConfig, CaseType, Flavor};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub id: Option<String>,
    pub case: u8,
    pub n: usize,
    pub te: f64,
    pub mp: f64,
    pub outcome_prevalence: Option<f64>,
    pub mediator_prevalence: Option<f64>,
    pub xm_correlation: Option<f64>,
    pub error_skewness: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub flavors: Option<Vec<String>>,
    pub level: Option<f64>,
    pub ghq_nodes: Option<usize>,
    pub bootstrap: Option<BootstrapSection>,
    /// Sweep files only.
    pub prevalences: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    pub replications: Option<usize>,
    /// Defaults to the scenario seed.
    pub seed: Option<u64>,
    pub max_retry_fraction: Option<f64>,
}

impl ScenarioFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::FileNotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text).map_err(|message| CliError::ScenarioFile {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Build and validate the scenario.
    pub fn scenario(&self) -> Result<SimulationScenario, CliError> {
        let case = CaseType::from_number(self.case)
            .ok_or_else(|| CliError::Config(format!("field `case`: expected 1, 2, 3 or 4, got {}", self.case)))?;
        let mut s = SimulationScenario::new(case, self.n, self.te, self.mp);
        if let Some(id) = &self.id {
            s.id = id.clone();
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { s.$field = v; })* };
        }
        set!(outcome_prevalence, mediator_prevalence, xm_correlation, error_skewness, replications, seed, level, ghq_nodes);
        if let Some(names) = &self.flavors {
            s.flavors = names
                .iter()
                .map(|n| n.parse::<Flavor>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Config(format!("field `flavors`: {e}")))?;
        }
        if let Some(b) = &self.bootstrap {
            let defaults = BootstrapConfig::default();
            s.bootstrap = Some(BootstrapConfig {
                replications: b.replications.unwrap_or(defaults.replications),
                seed: b.seed.unwrap_or(s.seed),
                max_retry_fraction: b.max_retry_fraction.unwrap_or(defaults.max_retry_fraction),
                level: s.level,
            });
        }
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let f = ScenarioFile::parse("case = 4\nn = 500\nte = 0.693\nmp = 0.5\n").unwrap();
        let s = f.scenario().unwrap();
        assert_eq!(s.case, CaseType::Case4);
        assert_eq!(s.replications, 1000);
        assert_eq!(s.flavors, vec![Flavor::Approximate, Flavor::Exact]);
        assert!(s.bootstrap.is_none());
    }

    #[test]
    fn bootstrap_section_inherits_seed_and_level() {
        let f = ScenarioFile::parse("case = 1\nn = 50\nte = 1\nmp = 0.5\nseed = 9\nlevel = 0.9\n[bootstrap]\nreplications = 100\n")
            .unwrap();
        let b = f.scenario().unwrap().bootstrap.unwrap();
        assert_eq!((b.replications, b.seed, b.level), (100, 9, 0.9));
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        assert!(ScenarioFile::parse("case = 1\nn = 50\nte = 1\nmp = 0.5\ncolour = 1\n").is_err());
        let f = ScenarioFile::parse("case = 1\nn = 50\nte = 1\nmp = 1.5\n").unwrap();
        let err = f.scenario().unwrap_err();
        assert!(err.to_string().contains("`mp`"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}
