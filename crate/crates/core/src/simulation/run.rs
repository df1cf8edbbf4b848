use std::fmt;

use super::{generate, solve_design, DesignParams, SimulationError, SimulationScenario};
use crate::inference::{bootstrap_around, delta_measures, quantile_sorted, BootstrapConfig};
use crate::measures::{Flavor, MediationRequest};
use crate::model::{fit_models, CovarianceKind};
use crate::par::{map_indexed, Execution};
use crate::rng::derive_seed;

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    Nie,
    Mp,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Nie => "nie",
            Measure::Mp => "mp",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Summary of one (flavor, measure) pair over the successful replications.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub flavor: Flavor,
    pub measure: Measure,
    pub truth: f64,
    /// Median of `(estimate − truth)/truth × 100`.
    pub bias_percent: f64,
    /// Fraction of delta-method intervals covering the truth.
    pub cr_delta: f64,
    /// Fraction of percentile-bootstrap intervals covering the truth.
    pub cr_boot: Option<f64>,
    /// Median delta variance over the empirical variance of the estimates;
    /// absent with fewer than two replications or no spread.
    pub variance_ratio: Option<f64>,
    pub empirical_variance: Option<f64>,
    pub median_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationMetrics {
    pub design: DesignParams,
    pub rows: Vec<MetricRow>,
    pub replications: usize,
    pub n_failed: usize,
    /// Mean number of records with `Y = 1` (binary outcome only).
    pub mean_cases: Option<f64>,
}

impl SimulationMetrics {
    pub fn row(&self, flavor: Flavor, measure: Measure) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.flavor == flavor && r.measure == measure)
    }
}

/// Estimates from one replicate for one flavor.
#[derive(Debug, Clone, Copy)]
struct FlavorDraw {
    nie: f64,
    nie_var: f64,
    nie_delta_hit: bool,
    nie_boot_hit: Option<bool>,
    mp: f64,
    mp_var: f64,
    mp_delta_hit: bool,
    mp_boot_hit: Option<bool>,
}

#[derive(Debug, Clone)]
struct Draw {
    flavors: Vec<FlavorDraw>,
    cases: Option<usize>,
}

pub fn run_scenario(scenario: &SimulationScenario) -> Result<SimulationMetrics, SimulationError> {
    run_scenario_with(scenario, Execution::default())
}

/// Solve the design, run every replicate and aggregate.
pub fn run_scenario_with(
    scenario: &SimulationScenario,
    exec: Execution,
) -> Result<SimulationMetrics, SimulationError> {
    let design = solve_design(scenario)?;
    let truth_nie = scenario.true_nie();
    let truth_mp = scenario.mp;
    let requests: Vec<MediationRequest> = scenario
        .flavors
        .iter()
        .map(|&f| MediationRequest::new(0.0, 1.0).with_flavor(f).with_nodes(scenario.ghq_nodes))
        .collect();

    let draws = map_indexed(scenario.replications, exec, |rep| {
        one_replicate(scenario, &design, &requests, rep as u64, truth_nie, truth_mp)
    });
    let valid: Vec<Draw> = draws.into_iter().flatten().collect();
    let n_failed = scenario.replications - valid.len();
    if n_failed as f64 > MAX_FAILURE_FRACTION * scenario.replications as f64 {
        return Err(SimulationError::TooManyFailures {
            failed: n_failed,
            replications: scenario.replications,
        });
    }

    let mut rows = Vec::with_capacity(2 * requests.len());
    for (k, &flavor) in scenario.flavors.iter().enumerate() {
        let fd: Vec<FlavorDraw> = valid.iter().map(|d| d.flavors[k]).collect();
        rows.push(summarise(
            flavor,
            Measure::Nie,
            truth_nie,
            fd.iter().map(|d| (d.nie, d.nie_var, d.nie_delta_hit, d.nie_boot_hit)),
        ));
        rows.push(summarise(
            flavor,
            Measure::Mp,
            truth_mp,
            fd.iter().map(|d| (d.mp, d.mp_var, d.mp_delta_hit, d.mp_boot_hit)),
        ));
    }
    let mean_cases = if scenario.case.y_binary() && !valid.is_empty() {
        let total: usize = valid.iter().filter_map(|d| d.cases).sum();
        Some(total as f64 / valid.len() as f64)
    } else {
        None
    };
    Ok(SimulationMetrics {
        design,
        rows,
        replications: scenario.replications,
        n_failed,
        mean_cases,
    })
}

/// Generate, fit and estimate replicate `rep`. `None` marks a failure: a fit
/// error, an undefined MP, a non-finite delta variance or an unstable bootstrap.
fn one_replicate(
    scenario: &SimulationScenario,
    design: &DesignParams,
    requests: &[MediationRequest],
    rep: u64,
    truth_nie: f64,
    truth_mp: f64,
) -> Option<Draw> {
    let data = generate(scenario, design, rep);
    let fitted = fit_models(&data, CovarianceKind::Sandwich).ok()?;
    let mut flavors = Vec::with_capacity(requests.len());
    let mut points = Vec::with_capacity(requests.len());
    for req in requests {
        let est = delta_measures(&fitted.theta, req, scenario.case, scenario.level).ok()?;
        let mp = est.mp?;
        points.push(est.measures);
        flavors.push(FlavorDraw {
            nie: est.nie.point,
            nie_var: est.nie.se.unwrap_or(0.0).powi(2),
            nie_delta_hit: est.nie.covers(truth_nie),
            nie_boot_hit: None,
            mp: mp.point,
            mp_var: mp.se.unwrap_or(0.0).powi(2),
            mp_delta_hit: mp.covers(truth_mp),
            mp_boot_hit: None,
        });
    }
    if let Some(cfg) = &scenario.bootstrap {
        let cfg = BootstrapConfig {
            seed: derive_seed(cfg.seed, rep),
            ..*cfg
        };
        let boot = bootstrap_around(&data, requests, scenario.case, &cfg, Execution::Sequential, &points).ok()?;
        for (fd, b) in flavors.iter_mut().zip(&boot) {
            fd.nie_boot_hit = Some(b.nie.covers(truth_nie));
            fd.mp_boot_hit = Some(b.mp.as_ref()?.covers(truth_mp));
        }
    }
    Some(Draw {
        flavors,
        cases: data.outcome_cases(),
    })
}

fn summarise(
    flavor: Flavor,
    measure: Measure,
    truth: f64,
    draws: impl Iterator<Item = (f64, f64, bool, Option<bool>)>,
) -> MetricRow {
    let mut estimates = Vec::new();
    let mut variances = Vec::new();
    let mut delta_hits = 0usize;
    let mut boot_hits = 0usize;
    let mut has_boot = true;
    for (est, var, hit, boot) in draws {
        estimates.push(est);
        variances.push(var);
        delta_hits += usize::from(hit);
        match boot {
            Some(b) => boot_hits += usize::from(b),
            None => has_boot = false,
        }
    }
    let count = estimates.len();
    if count == 0 {
        return MetricRow {
            flavor,
            measure,
            truth,
            bias_percent: f64::NAN,
            cr_delta: f64::NAN,
            cr_boot: None,
            variance_ratio: None,
            empirical_variance: None,
            median_variance: f64::NAN,
        };
    }
    let mut rel: Vec<f64> = estimates.iter().map(|e| (e - truth) / truth * 100.0).collect();
    rel.sort_by(f64::total_cmp);
    variances.sort_by(f64::total_cmp);
    let median_variance = quantile_sorted(&variances, 0.5);
    let empirical_variance = sample_variance(&estimates);
    MetricRow {
        flavor,
        measure,
        truth,
        bias_percent: quantile_sorted(&rel, 0.5),
        cr_delta: delta_hits as f64 / count as f64,
        cr_boot: has_boot.then(|| boot_hits as f64 / count as f64),
        variance_ratio: empirical_variance
            .filter(|&v| v > 0.0)
            .map(|v| median_variance / v),
        empirical_variance,
        median_variance,
    }
}

fn sample_variance(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Some(v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// One cell of a prevalence sweep; a failed cell keeps its error.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub prevalence: f64,
    pub result: Result<SimulationMetrics, SimulationError>,
}

/// Run `base` at each baseline outcome prevalence (binary-outcome cases only).
pub fn prevalence_sweep(
    base: &SimulationScenario,
    prevalences: &[f64],
    exec: Execution,
) -> Result<Vec<SweepCell>, SimulationError> {
    if !base.case.y_binary() {
        return Err(SimulationError::InvalidScenario {
            field: "case",
            message: format!("a prevalence sweep needs a binary outcome, got {}", base.case),
        });
    }
    if prevalences.is_empty() {
        return Err(SimulationError::InvalidScenario {
            field: "prevalences",
            message: "at least one prevalence is required".to_string(),
        });
    }
    Ok(prevalences
        .iter()
        .map(|&prevalence| {
            let scenario = SimulationScenario {
                outcome_prevalence: prevalence,
                ..base.clone()
            };
            SweepCell {
                prevalence,
                result: run_scenario_with(&scenario, exec),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_bias_of_symmetric_errors_is_zero() {
        let rows = summarise(
            Flavor::Exact,
            Measure::Nie,
            10.0,
            [9.0, 10.0, 11.0].into_iter().map(|e| (e, 1.0, true, None)),
        );
        assert_eq!(rows.bias_percent, 0.0);
        assert_eq!(rows.cr_delta, 1.0);
        assert_eq!(rows.cr_boot, None);
        // empirical variance 1 and every delta variance 1
        assert_eq!(rows.variance_ratio, Some(1.0));
    }

    #[test]
    fn single_replicate_has_no_variance_ratio() {
        let row = summarise(Flavor::Exact, Measure::Mp, 0.5, std::iter::once((0.4, 0.01, false, Some(true))));
        assert_eq!(row.cr_delta, 0.0);
        assert_eq!(row.cr_boot, Some(1.0));
        assert_eq!(row.variance_ratio, None);
    }
}
