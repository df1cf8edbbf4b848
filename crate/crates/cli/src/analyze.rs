//! The `analyze` command: fit both models on a CSV file and report NIE, TE
//! and MP for the requested flavors.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::ValueEnum;
use mediation_core::inference::{delta_measures, percentile_bootstrap_many};
use mediation_core::model::fit_models;
use mediation_core::{
    BootstrapConfig, CaseType, CovarianceKind, Dataset, Execution, Flavor, FittedModels, IntervalEstimate,
    MediationRequest,
};
use serde::Serialize;

use crate::error::CliError;
use crate::input::{load_csv, ColumnRoles};

/// Which estimator flavors to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FlavorSelection {
    /// Rare-outcome approximation and exact (binary outcome only).
    Both,
    Exact,
    Approximate,
    /// Probit approximation (binary outcome, continuous mediator).
    Probit,
    /// Every flavor defined for the case.
    All,
}

impl FlavorSelection {
    /// Flavors in report order; `None` picks `both` for a binary outcome and
    /// `exact` otherwise.
    pub fn resolve(selection: Option<Self>, case: CaseType) -> Result<Vec<Flavor>, CliError> {
        let selection = selection.unwrap_or(if case.y_binary() { Self::Both } else { Self::Exact });
        let wanted: Vec<Flavor> = match selection {
            Self::Both => vec![Flavor::Approximate, Flavor::Exact],
            Self::Exact => vec![Flavor::Exact],
            Self::Approximate => vec![Flavor::Approximate],
            Self::Probit => vec![Flavor::Probit],
            Self::All => [Flavor::Approximate, Flavor::Exact, Flavor::Probit]
                .into_iter()
                .filter(|f| case.admits(*f))
                .collect(),
        };
        if let Some(f) = wanted.iter().find(|f| !case.admits(**f)) {
            return Err(CliError::Config(format!("flavor `{f}` is not defined for {case}")));
        }
        Ok(wanted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceChoice {
    #[default]
    Sandwich,
    Model,
}

impl From<CovarianceChoice> for CovarianceKind {
    fn from(c: CovarianceChoice) -> Self {
        match c {
            CovarianceChoice::Sandwich => CovarianceKind::Sandwich,
            CovarianceChoice::Model => CovarianceKind::ModelBased,
        }
    }
}

/// Everything `analyze` needs; echoed verbatim into the JSON document.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisConfig {
    pub data_path: PathBuf,
    pub outcome: String,
    pub mediator: String,
    pub exposure: String,
    pub binary_outcome: bool,
    pub binary_mediator: bool,
    pub covariates_outcome: Vec<String>,
    pub covariates_mediator: Vec<String>,
    pub x0: f64,
    pub x1: f64,
    /// Covariate values for the outcome model; empty means all zeros.
    pub c_outcome: Vec<f64>,
    pub c_mediator: Vec<f64>,
    pub boot: bool,
    pub boot_r: usize,
    pub seed: u64,
    pub flavor: Option<FlavorSelection>,
    pub level: f64,
    pub covariance: CovarianceChoice,
    pub ghq_nodes: usize,
}

impl AnalysisConfig {
    fn roles(&self) -> ColumnRoles {
        ColumnRoles {
            outcome: self.outcome.clone(),
            mediator: self.mediator.clone(),
            exposure: self.exposure.clone(),
            binary_outcome: self.binary_outcome,
            binary_mediator: self.binary_mediator,
            covariates_outcome: self.covariates_outcome.clone(),
            covariates_mediator: self.covariates_mediator.clone(),
        }
    }

    fn covariate_values(&self) -> Result<(Vec<f64>, Vec<f64>), CliError> {
        let fill = |values: &[f64], names: &[String], flag: &str| {
            if values.is_empty() {
                Ok(vec![0.0; names.len()])
            } else if values.len() == names.len() {
                Ok(values.to_vec())
            } else {
                Err(CliError::Config(format!(
                    "--{flag} has {} values for {} covariates",
                    values.len(),
                    names.len()
                )))
            }
        };
        Ok((
            fill(&self.c_outcome, &self.covariates_outcome, "c-outcome")?,
            fill(&self.c_mediator, &self.covariates_mediator, "c-mediator")?,
        ))
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Config(format!("--level must lie in (0, 1), got {}", self.level)));
        }
        if !self.x0.is_finite() || !self.x1.is_finite() {
            return Err(CliError::Config("--x0 and --x1 must be finite".to_string()));
        }
        if self.ghq_nodes < 2 {
            return Err(CliError::Config(format!("--nodes must be at least 2, got {}", self.ghq_nodes)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MeasureName {
    #[serde(rename = "NIE")]
    Nie,
    #[serde(rename = "TE")]
    Te,
    #[serde(rename = "MP")]
    Mp,
}

impl MeasureName {
    pub fn label(self) -> &'static str {
        match self {
            MeasureName::Nie => "NIE",
            MeasureName::Te => "TE",
            MeasureName::Mp => "MP",
        }
    }
}

/// One reported (measure, flavor) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub measure: MeasureName,
    #[serde(serialize_with = "flavor_name")]
    pub flavor: Flavor,
    /// Absent when the measure is undefined (MP with a zero total effect).
    pub point: Option<f64>,
    pub se: Option<f64>,
    pub delta_ci: Option<[f64; 2]>,
    pub boot_ci: Option<[f64; 2]>,
    pub undefined: bool,
}

fn flavor_name<S: serde::Serializer>(f: &Flavor, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(f.name())
}

#[derive(Debug, Clone, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelDiagnostics {
    pub link: &'static str,
    pub converged: bool,
    pub iterations: usize,
    pub coefficients: Vec<Coefficient>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    pub n: usize,
    pub case: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_cases: Option<usize>,
    pub covariance: CovarianceChoice,
    pub outcome: ModelDiagnostics,
    pub mediator: ModelDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_failures: Option<usize>,
}

/// The JSON document.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub config_echo: AnalysisConfig,
    pub fit_diagnostics: FitDiagnostics,
    pub results: Vec<ResultRow>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn analyze(cfg: &AnalysisConfig, exec: Execution) -> Result<AnalysisReport, CliError> {
    cfg.validate()?;
    let (c_outcome, c_mediator) = cfg.covariate_values()?;
    let data = load_csv(&cfg.data_path, &cfg.roles())?;
    let case = data.case();
    let flavors = FlavorSelection::resolve(cfg.flavor, case)?;
    let requests: Vec<MediationRequest> = flavors
        .iter()
        .map(|&f| {
            MediationRequest::new(cfg.x0, cfg.x1)
                .with_covariates(c_outcome.clone(), c_mediator.clone())
                .with_flavor(f)
                .with_nodes(cfg.ghq_nodes)
        })
        .collect();

    let fitted = fit_models(&data, cfg.covariance.into())?;
    let delta = requests
        .iter()
        .map(|q| delta_measures(&fitted.theta, q, case, cfg.level))
        .collect::<Result<Vec<_>, _>>()?;
    let boot = if cfg.boot {
        let bcfg = BootstrapConfig {
            replications: cfg.boot_r,
            seed: cfg.seed,
            level: cfg.level,
            ..Default::default()
        };
        Some(percentile_bootstrap_many(&data, &requests, case, &bcfg, exec)?)
    } else {
        None
    };

    let ci = |e: &IntervalEstimate| [e.lower, e.upper];
    let mut results = Vec::with_capacity(3 * flavors.len());
    for measure in [MeasureName::Nie, MeasureName::Te, MeasureName::Mp] {
        for (k, &flavor) in flavors.iter().enumerate() {
            let d = &delta[k];
            let b = boot.as_ref().map(|b| &b[k]);
            let (de, be) = match measure {
                MeasureName::Nie => (Some(&d.nie), b.map(|b| &b.nie)),
                MeasureName::Te => (Some(&d.te), b.map(|b| &b.te)),
                MeasureName::Mp => (d.mp.as_ref(), b.and_then(|b| b.mp.as_ref())),
            };
            results.push(ResultRow {
                measure,
                flavor,
                point: de.map(|e| e.point),
                se: de.and_then(|e| e.se),
                delta_ci: de.map(ci),
                boot_ci: be.map(ci),
                undefined: de.is_none(),
            });
        }
    }

    Ok(AnalysisReport {
        config_echo: cfg.clone(),
        fit_diagnostics: diagnostics(cfg, &data, &fitted, boot.as_ref().map(|b| b[0].failures)),
        results,
    })
}

fn diagnostics(cfg: &AnalysisConfig, data: &Dataset, fitted: &FittedModels, boot_failures: Option<usize>) -> FitDiagnostics {
    let mut outcome_names = vec!["(intercept)".to_string(), cfg.exposure.clone(), cfg.mediator.clone()];
    outcome_names.extend(cfg.covariates_outcome.iter().cloned());
    let mut mediator_names = vec!["(intercept)".to_string(), cfg.exposure.clone()];
    mediator_names.extend(cfg.covariates_mediator.iter().cloned());
    let (o, m) = (&fitted.outcome, &fitted.mediator);
    FitDiagnostics {
        n: data.n(),
        case: data.case().to_string(),
        outcome_cases: data.outcome_cases(),
        covariance: cfg.covariance,
        outcome: ModelDiagnostics {
            link: o.link.name(),
            converged: o.converged,
            iterations: o.iterations,
            coefficients: coefficients(outcome_names, &o.beta, |j| o.cov_beta[(j, j)]),
            sigma2: None,
        },
        mediator: ModelDiagnostics {
            link: m.link.name(),
            converged: m.converged,
            iterations: m.iterations,
            coefficients: coefficients(mediator_names, &m.gamma, |j| m.cov_gamma[(j, j)]),
            sigma2: m.sigma2,
        },
        bootstrap_failures: boot_failures,
    }
}

fn coefficients(names: Vec<String>, estimates: &[f64], variance: impl Fn(usize) -> f64) -> Vec<Coefficient> {
    names
        .into_iter()
        .zip(estimates)
        .enumerate()
        .map(|(j, (name, &estimate))| Coefficient {
            name,
            estimate,
            se: variance(j).sqrt(),
        })
        .collect()
}

/// Four-decimal rendering shared by the table and its consumers; negative
/// zero prints as `0.0000`.
pub fn fmt4(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

fn fmt_ci(ci: Option<[f64; 2]>) -> String {
    ci.map_or_else(|| "-".to_string(), |[l, u]| format!("({}, {})", fmt4(l), fmt4(u)))
}

/// Fixed-width table of the result rows.
pub fn render_table(report: &AnalysisReport) -> String {
    let cfg = &report.config_echo;
    let diag = &report.fit_diagnostics;
    let pct = format!("{}%", (cfg.level * 100.0 * 1e6).round() / 1e6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Mediation analysis ({}), n = {}, contrast {} -> {}",
        diag.case, diag.n, cfg.x0, cfg.x1
    );
    let _ = writeln!(
        out,
        "{:<8}{:<13}{:<22}{:<26}{}",
        "Measure",
        "Flavor",
        "Point (S.E.)",
        format!("Delta {pct} CI"),
        format!("Bootstrap {pct} CI")
    );
    for row in &report.results {
        let point = match (row.point, row.se) {
            (Some(p), Some(se)) => format!("{} ({})", fmt4(p), fmt4(se)),
            (Some(p), None) => fmt4(p),
            _ => "undefined".to_string(),
        };
        let boot = if cfg.boot { fmt_ci(row.boot_ci) } else { String::new() };
        let line = format!(
            "{:<8}{:<13}{:<22}{:<26}{}",
            row.measure.label(),
            row.flavor.name(),
            point,
            fmt_ci(row.delta_ci),
            boot
        );
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out
}
