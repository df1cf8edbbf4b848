//! Natural indirect/direct effects, total effect and mediation proportion.
//!
//! Cases 1 and 2 (continuous outcome) are on the identity scale; Cases 3 and
//! 4 (binary outcome) are on the log-odds-ratio scale. For a binary outcome
//! every exact expression is a contrast of
//!
//! ```text
//! logit P(x_o, x_m) = logit E[Y_{x_o, M_{x_m}} | w],
//! ```
//!
//! the counterfactual outcome log-odds with exposure `x_o` acting directly and
//! the mediator drawn from its distribution under exposure `x_m`:
//!
//! ```text
//! NIE = logit P(x, x) − logit P(x, x*),   NDE = logit P(x, x*) − logit P(x*, x*).
//! ```
//!
//! TE is always assembled as `NIE + NDE`, never computed separately.

use std::fmt;
use std::str::FromStr;

use errorfunctions::RealErrorFunctions;
use thiserror::Error;

use crate::glm::{expit, softplus};
use crate::model::{Params, ThetaEstimate, ThetaLayout};
use crate::quadrature::{self, QuadratureError};

/// Default Gauss–Hermite node count for the Case 3 exact integrals.
pub const DEFAULT_GHQ_NODES: usize = 40;

/// MP is reported as undefined when `|TE|` does not exceed this.
pub const MP_GUARD: f64 = 1e-12;

/// Logistic-to-probit scaling used by the probit approximation.
pub const PROBIT_SCALE: f64 = 1.0 / 1.6;

/// Outcome/mediator data-type combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseType {
    /// Continuous outcome, continuous mediator.
    Case1,
    /// Continuous outcome, binary mediator.
    Case2,
    /// Binary outcome, continuous mediator.
    Case3,
    /// Binary outcome, binary mediator.
    Case4,
}

impl CaseType {
    pub fn from_flags(y_binary: bool, m_binary: bool) -> Self {
        match (y_binary, m_binary) {
            (false, false) => CaseType::Case1,
            (false, true) => CaseType::Case2,
            (true, false) => CaseType::Case3,
            (true, true) => CaseType::Case4,
        }
    }

    pub fn y_binary(self) -> bool {
        matches!(self, CaseType::Case3 | CaseType::Case4)
    }

    pub fn m_binary(self) -> bool {
        matches!(self, CaseType::Case2 | CaseType::Case4)
    }

    /// Flavors admissible for this case, in reporting order.
    pub fn flavors(self) -> &'static [Flavor] {
        match self {
            CaseType::Case1 | CaseType::Case2 => &[Flavor::Exact],
            CaseType::Case3 => &[Flavor::Approximate, Flavor::Exact, Flavor::Probit],
            CaseType::Case4 => &[Flavor::Approximate, Flavor::Exact],
        }
    }

    pub fn admits(self, flavor: Flavor) -> bool {
        self.flavors().contains(&flavor)
    }

    /// Whether the exact measures need σ² in θ.
    pub fn needs_sigma2(self, flavor: Flavor) -> bool {
        self == CaseType::Case3 && matches!(flavor, Flavor::Exact | Flavor::Probit)
    }

    pub fn number(self) -> u8 {
        match self {
            CaseType::Case1 => 1,
            CaseType::Case2 => 2,
            CaseType::Case3 => 3,
            CaseType::Case4 => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(CaseType::Case1),
            2 => Some(CaseType::Case2),
            3 => Some(CaseType::Case3),
            4 => Some(CaseType::Case4),
            _ => None,
        }
    }
}

impl fmt::Display for CaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case{}", self.number())
    }
}

/// Which expression is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Flavor {
    #[default]
    Exact,
    /// Rare-outcome approximation (Cases 3 and 4).
    Approximate,
    /// Probit approximation of the logistic-normal integral (Case 3).
    Probit,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Exact => "exact",
            Flavor::Approximate => "approximate",
            Flavor::Probit => "probit",
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Flavor::Exact),
            "approximate" | "approx" => Ok(Flavor::Approximate),
            "probit" => Ok(Flavor::Probit),
            other => Err(format!("unknown flavor `{other}` (expected exact, approximate or probit)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("flavor `{flavor}` is not defined for {case}")]
    InvalidFlavor { case: CaseType, flavor: Flavor },
    #[error("{model} covariate values: expected {expected}, got {found}")]
    CovariateLength {
        model: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("parameter vector has no residual variance but the {flavor} flavor needs one")]
    MissingSigma2 { flavor: Flavor },
    #[error("mediation proportion undefined: |TE| = {te:e} is below the guard")]
    UndefinedMp { te: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Exposure contrast and conditioning values at which measures are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct MediationRequest {
    /// Reference exposure `x*`.
    pub x_star: f64,
    /// Exposure `x`.
    pub x_new: f64,
    pub w_outcome: Vec<f64>,
    pub w_mediator: Vec<f64>,
    pub flavor: Flavor,
    pub ghq_nodes: usize,
}

impl MediationRequest {
    /// Contrast `x_star → x_new` with no covariates, exact flavor.
    pub fn new(x_star: f64, x_new: f64) -> Self {
        Self {
            x_star,
            x_new,
            w_outcome: Vec::new(),
            w_mediator: Vec::new(),
            flavor: Flavor::Exact,
            ghq_nodes: DEFAULT_GHQ_NODES,
        }
    }

    pub fn with_covariates(mut self, w_outcome: Vec<f64>, w_mediator: Vec<f64>) -> Self {
        self.w_outcome = w_outcome;
        self.w_mediator = w_mediator;
        self
    }

    pub fn with_flavor(mut self, flavor: Flavor) -> Self {
        self.flavor = flavor;
        self
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.ghq_nodes = nodes;
        self
    }

    pub fn delta_x(&self) -> f64 {
        self.x_new - self.x_star
    }

    fn check(&self, layout: ThetaLayout) -> Result<(), MeasureError> {
        if self.w_outcome.len() != layout.p_outcome {
            return Err(MeasureError::CovariateLength {
                model: "outcome",
                expected: layout.p_outcome,
                found: self.w_outcome.len(),
            });
        }
        if self.w_mediator.len() != layout.p_mediator {
            return Err(MeasureError::CovariateLength {
                model: "mediator",
                expected: layout.p_mediator,
                found: self.w_mediator.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureSet {
    pub nie: f64,
    pub nde: f64,
    pub te: f64,
    /// `None` when `|te| ≤ MP_GUARD`.
    pub mp: Option<f64>,
}

impl MeasureSet {
    pub fn from_parts(nie: f64, nde: f64) -> Self {
        let te = nie + nde;
        let mp = (te.abs() > MP_GUARD).then(|| nie / te);
        Self { nie, nde, te, mp }
    }

    pub fn mp_value(&self) -> Result<f64, MeasureError> {
        self.mp.ok_or(MeasureError::UndefinedMp { te: self.te })
    }
}

/// `β0 + β1 x + β3ᵀ w`
fn outcome_predictor(p: &Params<'_>, x: f64, w: &[f64]) -> f64 {
    p.beta0() + p.beta1() * x + dot(p.beta3(), w)
}

/// `γ0 + γ1 x + γ2ᵀ w`
fn mediator_predictor(p: &Params<'_>, x: f64, w: &[f64]) -> f64 {
    p.gamma0() + p.gamma1() * x + dot(p.gamma2(), w)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn sigma2(p: &Params<'_>, flavor: Flavor) -> Result<f64, MeasureError> {
    p.sigma2().ok_or(MeasureError::MissingSigma2 { flavor })
}

/// Continuous outcome and mediator: `NIE = β2 γ1 (x − x*)`, `NDE = β1 (x − x*)`.
pub fn measures_case1(p: Params<'_>, req: &MediationRequest) -> MeasureSet {
    product_measures(&p, req)
}

fn product_measures(p: &Params<'_>, req: &MediationRequest) -> MeasureSet {
    let dx = req.delta_x();
    MeasureSet::from_parts(p.beta2() * p.gamma1() * dx, p.beta1() * dx)
}

/// Continuous outcome, binary mediator:
/// `NIE = β2 {expit(γ0 + γ1 x + γ2ᵀw) − expit(γ0 + γ1 x* + γ2ᵀw)}`.
pub fn measures_case2(p: Params<'_>, req: &MediationRequest) -> MeasureSet {
    let a = mediator_predictor(&p, req.x_new, &req.w_mediator);
    let b = mediator_predictor(&p, req.x_star, &req.w_mediator);
    MeasureSet::from_parts(p.beta2() * expit_difference(a, b), p.beta1() * req.delta_x())
}

/// `expit(a) − expit(b)` without cancellation when `a ≈ b`.
fn expit_difference(a: f64, b: f64) -> f64 {
    let d = ((a - b) / 2.0).sinh() / (2.0 * (a / 2.0).cosh() * (b / 2.0).cosh());
    if d.is_finite() {
        d
    } else {
        expit(a) - expit(b)
    }
}

/// Binary outcome, continuous mediator, exact expressions via the
/// logistic-normal integrals.
pub fn measures_case3_exact(p: Params<'_>, req: &MediationRequest) -> Result<MeasureSet, MeasureError> {
    let s2 = sigma2(&p, Flavor::Exact)?;
    quadrature::with_rule(req.ghq_nodes, |rule| {
        // R(x_m, x_o): log-ratio of integrals with mediator exposure x_m and
        // outcome exposure x_o, so that logit P(x_o, x_m) = lin_out(x_o) + R.
        let ratio = |x_m: f64, x_o: f64| {
            quadrature::log_ratio(
                rule,
                mediator_predictor(&p, x_m, &req.w_mediator),
                s2,
                outcome_predictor(&p, x_o, &req.w_outcome),
                p.beta2(),
            )
        };
        let (x, xs) = (req.x_new, req.x_star);
        let r_xx = ratio(x, x)?;
        let r_sx = ratio(xs, x)?;
        let r_ss = ratio(xs, xs)?;
        Ok(MeasureSet::from_parts(
            r_xx - r_sx,
            p.beta1() * req.delta_x() + r_sx - r_ss,
        ))
    })?
}

/// Rare-outcome approximation for Case 3; same form as Case 1.
pub fn measures_case3_approx(p: Params<'_>, req: &MediationRequest) -> MeasureSet {
    product_measures(&p, req)
}

/// Probit approximation for Case 3: `logit P(x_o, x_m) ≈ logit Φ(A)` with
/// `A = s {lin_out(x_o) + β2 lin_med(x_m)} / √(1 + s² β2² σ²)`, `s = 1/1.6`.
pub fn measures_case3_probit(p: Params<'_>, req: &MediationRequest) -> Result<MeasureSet, MeasureError> {
    let s2 = sigma2(&p, Flavor::Probit)?;
    let s = PROBIT_SCALE;
    let b2 = p.beta2();
    let denom = (1.0 + s * s * b2 * b2 * s2).sqrt();
    let logit_p = |x_o: f64, x_m: f64| {
        let arg = s
            * (outcome_predictor(&p, x_o, &req.w_outcome)
                + b2 * mediator_predictor(&p, x_m, &req.w_mediator))
            / denom;
        logit_normal_cdf(arg)
    };
    let (x, xs) = (req.x_new, req.x_star);
    let mixed = logit_p(x, xs);
    Ok(MeasureSet::from_parts(logit_p(x, x) - mixed, mixed - logit_p(xs, xs)))
}

/// `ln Φ(u)` accurate in both tails.
pub fn ln_normal_cdf(u: f64) -> f64 {
    let z = u / std::f64::consts::SQRT_2;
    if u < 0.0 {
        // Φ(u) = erfc(−z)/2 = erfcx(−z) e^{−z²}/2
        (0.5 * RealErrorFunctions::erfcx(-z)).ln() - z * z
    } else {
        (-0.5 * RealErrorFunctions::erfc(z)).ln_1p()
    }
}

/// `logit Φ(u) = ln Φ(u) − ln Φ(−u)`.
pub fn logit_normal_cdf(u: f64) -> f64 {
    ln_normal_cdf(u) - ln_normal_cdf(-u)
}

/// Binary outcome and mediator, exact expressions. With
/// `η = exp(lin_out(x_o))` and `κ = exp(lin_med(x_m))`,
///
/// ```text
/// logit P(x_o, x_m) = ln η + ln{1 + e^{β2}η + e^{β2}κ(1 + η)} − ln{1 + e^{β2}η + κ(1 + η)}
/// ```
///
/// evaluated entirely in log space.
pub fn measures_case4_exact(p: Params<'_>, req: &MediationRequest) -> MeasureSet {
    let b2 = p.beta2();
    let logit_p = |x_o: f64, x_m: f64| {
        let l_eta = outcome_predictor(&p, x_o, &req.w_outcome);
        let l_kappa = mediator_predictor(&p, x_m, &req.w_mediator);
        let l_kappa_eta = l_kappa + softplus(l_eta);
        let numerator = log_sum_exp3(0.0, b2 + l_eta, b2 + l_kappa_eta);
        let denominator = log_sum_exp3(0.0, b2 + l_eta, l_kappa_eta);
        l_eta + (numerator - denominator)
    };
    let (x, xs) = (req.x_new, req.x_star);
    let mixed = logit_p(x, xs);
    MeasureSet::from_parts(logit_p(x, x) - mixed, mixed - logit_p(xs, xs))
}

fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// Rare-outcome approximation for Case 4:
/// `NIE = ln{(1 + κ*)(1 + e^{β2}κ) / ((1 + κ)(1 + e^{β2}κ*))}`, `NDE = β1 (x − x*)`.
pub fn measures_case4_approx(p: Params<'_>, req: &MediationRequest) -> MeasureSet {
    let l_kappa = mediator_predictor(&p, req.x_new, &req.w_mediator);
    let l_kappa_star = mediator_predictor(&p, req.x_star, &req.w_mediator);
    let b2 = p.beta2();
    // grouped so that β2 = 0 and γ1 = 0 both cancel exactly
    let nie = (softplus(b2 + l_kappa) - softplus(l_kappa)) - (softplus(b2 + l_kappa_star) - softplus(l_kappa_star));
    MeasureSet::from_parts(nie, p.beta1() * req.delta_x())
}

/// Evaluate the measures of `req.flavor` for `case` at θ̂.
pub fn evaluate(theta: &ThetaEstimate, req: &MediationRequest, case: CaseType) -> Result<MeasureSet, MeasureError> {
    evaluate_params(theta.params(), req, case)
}

/// [`evaluate`] on a borrowed parameter view; used for perturbed θ in the
/// delta method.
pub fn evaluate_params(p: Params<'_>, req: &MediationRequest, case: CaseType) -> Result<MeasureSet, MeasureError> {
    if !case.admits(req.flavor) {
        return Err(MeasureError::InvalidFlavor {
            case,
            flavor: req.flavor,
        });
    }
    req.check(p.layout())?;
    match (case, req.flavor) {
        (CaseType::Case1, _) => Ok(measures_case1(p, req)),
        (CaseType::Case2, _) => Ok(measures_case2(p, req)),
        (CaseType::Case3, Flavor::Exact) => measures_case3_exact(p, req),
        (CaseType::Case3, Flavor::Approximate) => Ok(measures_case3_approx(p, req)),
        (CaseType::Case3, Flavor::Probit) => measures_case3_probit(p, req),
        (CaseType::Case4, Flavor::Exact) => Ok(measures_case4_exact(p, req)),
        (CaseType::Case4, _) => Ok(measures_case4_approx(p, req)),
    }
}
