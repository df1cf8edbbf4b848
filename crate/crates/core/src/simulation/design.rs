//! Solving data-generating coefficients from (TE, MP) targets.

use super::{SimulationError, SimulationScenario};
use crate::glm::expit;
use crate::measures::{evaluate, CaseType, Flavor, MeasureSet, MediationRequest};
use crate::model::ThetaEstimate;

const MAX_NEWTON_ITERATIONS: usize = 200;
const RESIDUAL_TOLERANCE: f64 = 1e-8;
// Newton stops early once the residual is this small; the acceptance
// threshold above is looser so the round trip holds with margin.
const TARGET_RESIDUAL: f64 = 1e-13;
const JACOBIAN_STEP: f64 = 1e-6;

/// Coefficients of the generating outcome and mediator models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Mediator error variance; continuous-mediator cases only.
    pub sigma2: Option<f64>,
}

impl DesignParams {
    pub fn theta(&self) -> ThetaEstimate {
        ThetaEstimate::from_coefficients(
            &[self.beta0, self.beta1, self.beta2],
            &[self.gamma0, self.gamma1],
            self.sigma2,
        )
    }

    /// Exact measures of `case` at these coefficients for the `0 → 1` contrast.
    pub fn exact_measures(&self, case: CaseType, nodes: usize) -> MeasureSet {
        let req = MediationRequest::new(0.0, 1.0).with_flavor(Flavor::Exact).with_nodes(nodes);
        evaluate(&self.theta(), &req, case).expect("design coefficients are always evaluable")
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `γ1` giving `Corr(X, M) = corr` for `X ~ Bernoulli(0.5)` and
/// `M = γ0 + γ1 X + ε`, `Var ε = 1`: `corr = (γ1/2) / √(γ1²/4 + 1)`.
pub fn continuous_mediator_slope(corr: f64) -> f64 {
    2.0 * corr / (1.0 - corr * corr).sqrt()
}

/// Point-biserial correlation of `X ~ Bernoulli(0.5)` with a binary `M` whose
/// success probabilities are `expit(γ0)` at `X = 0` and `expit(γ0 + γ1)` at `X = 1`.
pub fn binary_mediator_correlation(gamma0: f64, gamma1: f64) -> f64 {
    let (p0, p1) = (expit(gamma0), expit(gamma0 + gamma1));
    let mean = 0.5 * (p0 + p1);
    0.25 * (p1 - p0) / (0.5 * (mean * (1.0 - mean)).sqrt())
}

/// Bisection for the binary-mediator slope matching `corr`.
fn binary_mediator_slope(case: CaseType, gamma0: f64, corr: f64) -> Result<f64, SimulationError> {
    let f = |g: f64| binary_mediator_correlation(gamma0, g) - corr;
    let (mut lo, mut hi) = if corr > 0.0 { (0.0, 40.0) } else { (-40.0, 0.0) };
    if f(lo) * f(hi) > 0.0 {
        return Err(SimulationError::SolverFailure {
            case,
            iterations: 0,
            residual: f(lo).abs().min(f(hi).abs()),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) * f(lo) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Coefficients reproducing the scenario's TE and MP through the exact
/// measures. Binary-outcome cases fix `β0 = logit(outcome prevalence)` and
/// solve `(β1, β2)` by damped Newton from the rare-outcome solution.
pub fn solve_design(scenario: &SimulationScenario) -> Result<DesignParams, SimulationError> {
    scenario.validate()?;
    let (te, mp) = (scenario.te, scenario.mp);
    let nie = mp * te;
    let nde = (1.0 - mp) * te;
    let case = scenario.case;

    let (gamma0, gamma1, sigma2) = if case.m_binary() {
        let g0 = logit(scenario.mediator_prevalence);
        (g0, binary_mediator_slope(case, g0, scenario.xm_correlation)?, None)
    } else {
        (0.0, continuous_mediator_slope(scenario.xm_correlation), Some(1.0))
    };
    let mediator_shift = if case.m_binary() {
        expit(gamma0 + gamma1) - expit(gamma0)
    } else {
        gamma1
    };

    let mut params = DesignParams {
        beta0: 0.0,
        beta1: nde,
        beta2: nie / mediator_shift,
        gamma0,
        gamma1,
        sigma2,
    };
    if !case.y_binary() {
        return Ok(params);
    }

    params.beta0 = logit(scenario.outcome_prevalence);
    if case == CaseType::Case4 {
        params.beta2 = case4_initial_beta2(nie, gamma0, gamma1).unwrap_or(params.beta2);
    }
    newton(case, scenario.ghq_nodes, params, [nie, nde])
}

/// `β2` solving the rare-outcome Case 4 NIE: with `κ = e^{γ0+γ1}`, `κ* = e^{γ0}`
/// and `R = e^{NIE}(1 + κ)/(1 + κ*)`, `e^{β2} = (R − 1)/(κ − R κ*)`.
fn case4_initial_beta2(nie: f64, gamma0: f64, gamma1: f64) -> Option<f64> {
    let (k, ks) = ((gamma0 + gamma1).exp(), gamma0.exp());
    let r = nie.exp() * (1.0 + k) / (1.0 + ks);
    let q = (r - 1.0) / (k - r * ks);
    (q > 0.0 && q.is_finite()).then(|| q.ln())
}

fn newton(
    case: CaseType,
    nodes: usize,
    start: DesignParams,
    target: [f64; 2],
) -> Result<DesignParams, SimulationError> {
    let residual = |b1: f64, b2: f64| -> [f64; 2] {
        let m = DesignParams {
            beta1: b1,
            beta2: b2,
            ..start
        }
        .exact_measures(case, nodes);
        [m.nie - target[0], m.nde - target[1]]
    };
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());

    let (mut b1, mut b2) = (start.beta1, start.beta2);
    let mut r = residual(b1, b2);
    let mut iterations = 0;
    while iterations < MAX_NEWTON_ITERATIONS && norm(r) > TARGET_RESIDUAL {
        iterations += 1;
        let h1 = JACOBIAN_STEP * b1.abs().max(1.0);
        let h2 = JACOBIAN_STEP * b2.abs().max(1.0);
        let (r1p, r1m) = (residual(b1 + h1, b2), residual(b1 - h1, b2));
        let (r2p, r2m) = (residual(b1, b2 + h2), residual(b1, b2 - h2));
        let j = [
            [(r1p[0] - r1m[0]) / (2.0 * h1), (r2p[0] - r2m[0]) / (2.0 * h2)],
            [(r1p[1] - r1m[1]) / (2.0 * h1), (r2p[1] - r2m[1]) / (2.0 * h2)],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let d1 = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let d2 = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;

        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let (c1, c2) = (b1 - step * d1, b2 - step * d2);
            let rc = residual(c1, c2);
            if rc.iter().all(|v| v.is_finite()) && norm(rc) < norm(r) {
                b1 = c1;
                b2 = c2;
                r = rc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if norm(r) > RESIDUAL_TOLERANCE || !norm(r).is_finite() {
        return Err(SimulationError::SolverFailure {
            case,
            iterations,
            residual: norm(r),
        });
    }
    Ok(DesignParams {
        beta1: b1,
        beta2: b2,
        ..start
    })
}
