//! Delta-method and percentile-bootstrap intervals.
//!
//! Delta-method gradients are central finite differences of the measure
//! functions with respect to θ, so one code path covers every case and
//! flavor (including the quadrature-based Case 3 exact expressions).

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::Dataset;
use crate::glm::FitError;
use crate::measures::{evaluate, evaluate_params, CaseType, MeasureError, MeasureSet, MediationRequest};
use crate::model::{fit_models, CovarianceKind, Params, ThetaEstimate};
use crate::par::{map_indexed, Execution};
use crate::rng::{stream, Domain};

/// Relative finite-difference step: `h_j = STEP · max(1, |θ_j|)`.
pub const GRADIENT_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("measure is not finite when θ[{coordinate}] is perturbed")]
    NonFiniteGradient { coordinate: usize },
    #[error("bootstrap unstable: {failures} failed refits exceed the budget of {budget} for {replications} replications")]
    BootstrapInstability {
        failures: usize,
        budget: usize,
        replications: usize,
    },
    #[error("invalid bootstrap configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalMethod {
    Delta,
    Bootstrap,
}

impl IntervalMethod {
    pub fn name(self) -> &'static str {
        match self {
            IntervalMethod::Delta => "delta",
            IntervalMethod::Bootstrap => "bootstrap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate {
    pub point: f64,
    /// Standard error; delta intervals only.
    pub se: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub method: IntervalMethod,
    pub level: f64,
}

impl IntervalEstimate {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// `Var f(θ̂) ≈ ∇fᵀ Σ̂ ∇f` with a central-difference gradient.
pub fn delta_variance(f: impl Fn(&[f64]) -> f64, theta: &ThetaEstimate) -> Result<f64, InferenceError> {
    let [v] = delta_variances(|t| [f(t)], theta);
    v
}

/// [`delta_variance`] for `K` functions sharing each perturbed evaluation.
/// Each output fails independently when its own perturbations are non-finite.
pub fn delta_variances<const K: usize>(
    f: impl Fn(&[f64]) -> [f64; K],
    theta: &ThetaEstimate,
) -> [Result<f64, InferenceError>; K] {
    let dim = theta.theta.len();
    let cov = &theta.cov_theta;
    let mut grads = [(); K].map(|_| vec![0.0; dim]);
    let mut failed: [Option<usize>; K] = [None; K];
    let mut work = theta.theta.clone();
    for j in 0..dim {
        // coordinates with no uncertainty never contribute
        if cov.row(j).iter().all(|&c| c == 0.0) {
            continue;
        }
        let t = theta.theta[j];
        let h = GRADIENT_STEP * t.abs().max(1.0);
        let (up, down) = (t + h, t - h);
        work[j] = up;
        let f_up = f(&work);
        work[j] = down;
        let f_down = f(&work);
        work[j] = t;
        for k in 0..K {
            let g = (f_up[k] - f_down[k]) / (up - down);
            if g.is_finite() {
                grads[k][j] = g;
            } else if failed[k].is_none() {
                failed[k] = Some(j);
            }
        }
    }
    std::array::from_fn(|k| match failed[k] {
        Some(coordinate) => Err(InferenceError::NonFiniteGradient { coordinate }),
        None => {
            let g = &grads[k];
            let mut v = 0.0;
            for i in 0..dim {
                if g[i] == 0.0 {
                    continue;
                }
                for j in 0..dim {
                    v += g[i] * cov[(i, j)] * g[j];
                }
            }
            Ok(v.max(0.0))
        }
    })
}

/// Two-sided standard-normal critical value for `level`.
pub fn normal_critical_value(level: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0)
}

/// `point ± z_{(1+level)/2} √variance`.
pub fn delta_interval(point: f64, variance: f64, level: f64) -> IntervalEstimate {
    let se = variance.max(0.0).sqrt();
    let half = if se == 0.0 { 0.0 } else { normal_critical_value(level) * se };
    IntervalEstimate {
        point,
        se: Some(se),
        lower: point - half,
        upper: point + half,
        method: IntervalMethod::Delta,
        level,
    }
}

/// Point estimates of one flavor with their delta-method intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEstimates {
    pub measures: MeasureSet,
    pub nie: IntervalEstimate,
    pub nde: IntervalEstimate,
    pub te: IntervalEstimate,
    /// Absent when MP is undefined at θ̂.
    pub mp: Option<IntervalEstimate>,
}

/// Evaluate `req` at θ̂ and attach delta-method intervals to NIE, NDE, TE and MP.
pub fn delta_measures(
    theta: &ThetaEstimate,
    req: &MediationRequest,
    case: CaseType,
    level: f64,
) -> Result<DeltaEstimates, InferenceError> {
    let measures = evaluate(theta, req, case)?;
    let layout = theta.layout;
    let [v_nie, v_nde, v_te, v_mp] = delta_variances(
        |t| match evaluate_params(Params::new(t, layout), req, case) {
            Ok(m) => [m.nie, m.nde, m.te, m.mp.unwrap_or(f64::NAN)],
            Err(_) => [f64::NAN; 4],
        },
        theta,
    );
    let mp = match measures.mp {
        Some(mp) => Some(delta_interval(mp, v_mp?, level)),
        None => None,
    };
    Ok(DeltaEstimates {
        nie: delta_interval(measures.nie, v_nie?, level),
        nde: delta_interval(measures.nde, v_nde?, level),
        te: delta_interval(measures.te, v_te?, level),
        mp,
        measures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
    /// Failed refits are redrawn; more than `floor(fraction · R)` failures in
    /// total is an error.
    pub max_retry_fraction: f64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 2000,
            seed: 0,
            max_retry_fraction: 0.01,
            level: 0.95,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.replications < 2 {
            return Err(InferenceError::InvalidConfig(format!(
                "replications must be at least 2, got {}",
                self.replications
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(InferenceError::InvalidConfig(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if !(0.0..1.0).contains(&self.max_retry_fraction) {
            return Err(InferenceError::InvalidConfig(format!(
                "max_retry_fraction must lie in [0, 1), got {}",
                self.max_retry_fraction
            )));
        }
        Ok(())
    }

    pub fn failure_budget(&self) -> usize {
        (self.max_retry_fraction * self.replications as f64).floor() as usize
    }
}

/// Percentile intervals for one flavor.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapIntervals {
    pub nie: IntervalEstimate,
    pub te: IntervalEstimate,
    /// Absent when MP is undefined at the full-data estimate or in any replicate.
    pub mp: Option<IntervalEstimate>,
    /// Refits that failed and were redrawn.
    pub failures: usize,
}

/// Percentile bootstrap for a single request.
pub fn percentile_bootstrap(
    data: &Dataset,
    req: &MediationRequest,
    case: CaseType,
    cfg: &BootstrapConfig,
) -> Result<BootstrapIntervals, InferenceError> {
    let mut out = percentile_bootstrap_many(data, std::slice::from_ref(req), case, cfg, Execution::default())?;
    Ok(out.remove(0))
}

/// Percentile bootstrap for several requests (typically one per flavor),
/// sharing each resample's refit.
pub fn percentile_bootstrap_many(
    data: &Dataset,
    reqs: &[MediationRequest],
    case: CaseType,
    cfg: &BootstrapConfig,
    exec: Execution,
) -> Result<Vec<BootstrapIntervals>, InferenceError> {
    cfg.validate()?;
    let fitted = fit_models(data, CovarianceKind::Sandwich)?;
    let points = reqs
        .iter()
        .map(|q| evaluate(&fitted.theta, q, case))
        .collect::<Result<Vec<_>, _>>()?;
    bootstrap_around(data, reqs, case, cfg, exec, &points)
}

/// Bootstrap with known full-data point estimates.
pub(crate) fn bootstrap_around(
    data: &Dataset,
    reqs: &[MediationRequest],
    case: CaseType,
    cfg: &BootstrapConfig,
    exec: Execution,
    points: &[MeasureSet],
) -> Result<Vec<BootstrapIntervals>, InferenceError> {
    cfg.validate()?;
    let budget = cfg.failure_budget();
    let reps = map_indexed(cfg.replications, exec, |r| replicate(data, reqs, case, cfg.seed, r, budget));
    let failures: usize = reps.iter().map(|(_, f)| f).sum();
    if failures > budget || reps.iter().any(|(s, _)| s.is_none()) {
        return Err(InferenceError::BootstrapInstability {
            failures,
            budget,
            replications: cfg.replications,
        });
    }
    let stats: Vec<Vec<MeasureSet>> = reps.into_iter().map(|(s, _)| s.expect("checked above")).collect();
    let level = cfg.level;
    let interval = |point: f64, mut values: Vec<f64>| {
        values.sort_by(f64::total_cmp);
        IntervalEstimate {
            point,
            se: None,
            lower: quantile_sorted(&values, (1.0 - level) / 2.0),
            upper: quantile_sorted(&values, (1.0 + level) / 2.0),
            method: IntervalMethod::Bootstrap,
            level,
        }
    };
    Ok(points
        .iter()
        .enumerate()
        .map(|(k, point)| {
            let mp = point.mp.and_then(|p| {
                let values: Option<Vec<f64>> = stats.iter().map(|s| s[k].mp).collect();
                values.map(|v| interval(p, v))
            });
            BootstrapIntervals {
                nie: interval(point.nie, stats.iter().map(|s| s[k].nie).collect()),
                te: interval(point.te, stats.iter().map(|s| s[k].te).collect()),
                mp,
                failures,
            }
        })
        .collect())
}

/// Replicate `r`: resample, refit and evaluate; on failure redraw from the
/// next attempt stream. Returns the statistics and the failed attempt count.
fn replicate(
    data: &Dataset,
    reqs: &[MediationRequest],
    case: CaseType,
    seed: u64,
    r: usize,
    budget: usize,
) -> (Option<Vec<MeasureSet>>, usize) {
    let n = data.n();
    for attempt in 0..=budget {
        let mut rng = stream(seed, Domain::Bootstrap, r as u64, attempt as u64);
        let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let sample = data.resample(&indices);
        let stats = fit_models(&sample, CovarianceKind::Sandwich).ok().and_then(|fit| {
            reqs.iter()
                .map(|q| evaluate(&fit.theta, q, case).ok())
                .collect::<Option<Vec<_>>>()
        });
        if let Some(s) = stats.filter(|s| s.iter().all(|m| m.nie.is_finite() && m.te.is_finite())) {
            return (Some(s), attempt);
        }
    }
    (None, budget + 1)
}

/// Quantile of sorted data by linear interpolation between order statistics:
/// `h = (n − 1) p`, `q = x_⌊h⌋ + (h − ⌊h⌋)(x_⌊h⌋+1 − x_⌊h⌋)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn with_cov(theta: Vec<f64>, cov: DMatrix<f64>) -> ThetaEstimate {
        let mut t = ThetaEstimate::from_coefficients(&theta[..3], &theta[3..5], theta.get(5).copied());
        t.cov_theta = cov;
        t
    }

    #[test]
    fn linear_function_is_exact() {
        // |f| stays O(1) here so the central-difference roundoff (≈ ε|f|/h)
        // is far below the tolerance
        let t = with_cov(vec![0.3, -0.1, 0.2, 0.4, 0.5, 1.0], DMatrix::identity(6, 6));
        let c = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let v = delta_variance(|th| th.iter().zip(&c).map(|(a, b)| a * b).sum(), &t).unwrap();
        let expected: f64 = c.iter().map(|x| x * x).sum();
        assert!((v - expected).abs() < 1e-10);
    }

    #[test]
    fn constant_function_has_zero_variance() {
        let t = with_cov(vec![0.3, -1.0, 2.0, 4.0, 0.5], DMatrix::identity(5, 5));
        assert_eq!(delta_variance(|_| 7.0, &t).unwrap(), 0.0);
    }

    #[test]
    fn product_method_variance() {
        let (b2, g1, vb, vg) = (1.2255, 0.408, 0.003, 0.0008);
        let mut cov = DMatrix::zeros(5, 5);
        cov[(2, 2)] = vb;
        cov[(4, 4)] = vg;
        let t = with_cov(vec![0.0, 0.5, b2, 0.0, g1], cov);
        let v = delta_variance(|th| th[2] * th[4], &t).unwrap();
        assert_relative_eq!(v, g1 * g1 * vb + b2 * b2 * vg, max_relative = 1e-8);
    }

    #[test]
    fn non_finite_perturbation_is_reported() {
        let t = with_cov(vec![0.0, 0.5, 1.0, 0.0, 0.4], DMatrix::identity(5, 5));
        let err = delta_variance(|th| if th[1] > 0.5 { f64::NAN } else { 0.0 }, &t).unwrap_err();
        assert_eq!(err, InferenceError::NonFiniteGradient { coordinate: 1 });
    }

    #[test]
    fn standard_normal_interval() {
        let i = delta_interval(0.0, 1.0, 0.95);
        assert!((i.upper - 1.959963985).abs() < 1e-9);
        assert_eq!(i.lower, -i.upper);
        let d = delta_interval(2.5, 0.0, 0.95);
        assert_eq!((d.lower, d.upper), (2.5, 2.5));
    }

    #[test]
    fn formatted_interval_example() {
        let i = delta_interval(0.437, 0.073 * 0.073, 0.95);
        assert!((i.lower - 0.294).abs() < 1e-3 && (i.upper - 0.580).abs() < 1e-3);
    }

    #[test]
    fn quantile_interpolates_order_statistics() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_relative_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_relative_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&[3.0], 0.3), 3.0);
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::default().validate().is_ok());
        let bad = BootstrapConfig {
            replications: 1,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(InferenceError::InvalidConfig(_))));
        assert_eq!(BootstrapConfig::default().failure_budget(), 20);
    }
}
