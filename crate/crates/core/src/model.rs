//! Outcome and mediator regressions and the stacked parameter vector θ.
//!
//! θ is laid out as `(β0, β1, β2, β3₁..β3_p, γ0, γ1, γ2₁..γ2_q, [σ²])`. The two
//! regressions are fitted from separate estimating equations whose scores are
//! asymptotically uncorrelated, so the covariance of θ is block diagonal with
//! exact zeros off the blocks.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::glm::{fit_glm, Design, FitError, LinkFunction};

/// Which covariance estimate is reported for β and γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceKind {
    /// Robust `A⁻¹ B A⁻ᵀ`.
    #[default]
    Sandwich,
    /// Inverse information (times the dispersion for the identity link).
    ModelBased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedOutcome {
    /// `(β0, β1, β2, β3…)`
    pub beta: Vec<f64>,
    pub cov_beta: DMatrix<f64>,
    pub link: LinkFunction,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedMediator {
    /// `(γ0, γ1, γ2…)`
    pub gamma: Vec<f64>,
    pub cov_gamma: DMatrix<f64>,
    /// Residual variance, present iff the link is identity.
    pub sigma2: Option<f64>,
    pub var_sigma2: Option<f64>,
    pub link: LinkFunction,
    pub converged: bool,
    pub iterations: usize,
}

/// Fit `g(E[Y]) = β0 + β1 X + β2 M + β3ᵀ W` with the sandwich covariance.
pub fn fit_outcome_model(data: &Dataset) -> Result<FittedOutcome, FitError> {
    fit_outcome_model_with(data, CovarianceKind::Sandwich)
}

pub fn fit_outcome_model_with(data: &Dataset, kind: CovarianceKind) -> Result<FittedOutcome, FitError> {
    let mut columns: Vec<&[f64]> = vec![data.x(), data.m()];
    columns.extend(data.w_outcome().iter().map(Vec::as_slice));
    let link = if data.y_binary() {
        LinkFunction::Logit
    } else {
        LinkFunction::Identity
    };
    let fit = fit_glm(&Design::with_intercept(&columns), data.y(), link)?;
    let cov_beta = match kind {
        CovarianceKind::Sandwich => fit.cov_sandwich,
        CovarianceKind::ModelBased => fit.cov_model,
    };
    Ok(FittedOutcome {
        beta: fit.coef,
        cov_beta,
        link,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

/// Fit `h(E[M]) = γ0 + γ1 X + γ2ᵀ W`; for a continuous mediator also solve
/// `Σ {σ² − (Mᵢ − μᵢ)²} = 0` for σ² and take its sandwich variance.
pub fn fit_mediator_model(data: &Dataset) -> Result<FittedMediator, FitError> {
    fit_mediator_model_with(data, CovarianceKind::Sandwich)
}

pub fn fit_mediator_model_with(data: &Dataset, kind: CovarianceKind) -> Result<FittedMediator, FitError> {
    let mut columns: Vec<&[f64]> = vec![data.x()];
    columns.extend(data.w_mediator().iter().map(Vec::as_slice));
    let link = if data.m_binary() {
        LinkFunction::Logit
    } else {
        LinkFunction::Identity
    };
    let fit = fit_glm(&Design::with_intercept(&columns), data.m(), link)?;

    let (sigma2, var_sigma2) = match link {
        LinkFunction::Identity => {
            let n = data.n() as f64;
            let sq: Vec<f64> = data
                .m()
                .iter()
                .zip(&fit.fitted)
                .map(|(m, mu)| (m - mu) * (m - mu))
                .collect();
            let s2 = sq.iter().sum::<f64>() / n;
            let v = sq.iter().map(|r2| (r2 - s2) * (r2 - s2)).sum::<f64>() / (n * n);
            (Some(s2), Some(v))
        }
        LinkFunction::Logit => (None, None),
    };
    let cov_gamma = match kind {
        CovarianceKind::Sandwich => fit.cov_sandwich,
        CovarianceKind::ModelBased => fit.cov_model,
    };
    Ok(FittedMediator {
        gamma: fit.coef,
        cov_gamma,
        sigma2,
        var_sigma2,
        link,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

/// Index map of θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaLayout {
    pub p_outcome: usize,
    pub p_mediator: usize,
    pub has_sigma2: bool,
}

impl ThetaLayout {
    pub const BETA0: usize = 0;
    pub const BETA1: usize = 1;
    pub const BETA2: usize = 2;

    pub fn beta_len(&self) -> usize {
        self.p_outcome + 3
    }

    pub fn gamma_len(&self) -> usize {
        self.p_mediator + 2
    }

    pub fn gamma0(&self) -> usize {
        self.beta_len()
    }

    pub fn gamma1(&self) -> usize {
        self.beta_len() + 1
    }

    pub fn sigma2(&self) -> Option<usize> {
        self.has_sigma2.then(|| self.beta_len() + self.gamma_len())
    }

    pub fn len(&self) -> usize {
        self.beta_len() + self.gamma_len() + usize::from(self.has_sigma2)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Borrowed view of a θ vector, named by role.
#[derive(Debug, Clone, Copy)]
pub struct Params<'a> {
    theta: &'a [f64],
    layout: ThetaLayout,
}

impl<'a> Params<'a> {
    pub fn new(theta: &'a [f64], layout: ThetaLayout) -> Self {
        assert_eq!(theta.len(), layout.len(), "θ length does not match its layout");
        Self { theta, layout }
    }

    pub fn layout(&self) -> ThetaLayout {
        self.layout
    }

    pub fn beta0(&self) -> f64 {
        self.theta[ThetaLayout::BETA0]
    }

    pub fn beta1(&self) -> f64 {
        self.theta[ThetaLayout::BETA1]
    }

    pub fn beta2(&self) -> f64 {
        self.theta[ThetaLayout::BETA2]
    }

    pub fn beta3(&self) -> &'a [f64] {
        &self.theta[3..self.layout.beta_len()]
    }

    pub fn gamma0(&self) -> f64 {
        self.theta[self.layout.gamma0()]
    }

    pub fn gamma1(&self) -> f64 {
        self.theta[self.layout.gamma1()]
    }

    pub fn gamma2(&self) -> &'a [f64] {
        let start = self.layout.gamma1() + 1;
        &self.theta[start..start + self.layout.p_mediator]
    }

    pub fn sigma2(&self) -> Option<f64> {
        self.layout.sigma2().map(|i| self.theta[i])
    }
}

/// Stacked estimate θ̂ and its block-diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub theta: Vec<f64>,
    pub cov_theta: DMatrix<f64>,
    pub layout: ThetaLayout,
}

impl ThetaEstimate {
    /// θ from known coefficients with zero covariance; used for design
    /// solving and for evaluating measures at fixed parameter values.
    pub fn from_coefficients(beta: &[f64], gamma: &[f64], sigma2: Option<f64>) -> Self {
        assert!(beta.len() >= 3 && gamma.len() >= 2, "β needs ≥ 3 and γ ≥ 2 entries");
        let layout = ThetaLayout {
            p_outcome: beta.len() - 3,
            p_mediator: gamma.len() - 2,
            has_sigma2: sigma2.is_some(),
        };
        let mut theta = Vec::with_capacity(layout.len());
        theta.extend_from_slice(beta);
        theta.extend_from_slice(gamma);
        theta.extend(sigma2);
        Self {
            theta,
            cov_theta: DMatrix::zeros(layout.len(), layout.len()),
            layout,
        }
    }

    pub fn params(&self) -> Params<'_> {
        Params::new(&self.theta, self.layout)
    }
}

/// Stack `(β; γ)` or `(β; γ; σ²)` with the block-diagonal covariance.
pub fn assemble_theta(
    outcome: &FittedOutcome,
    mediator: &FittedMediator,
    needs_sigma2: bool,
) -> Result<ThetaEstimate, FitError> {
    let sigma = if needs_sigma2 {
        match (mediator.sigma2, mediator.var_sigma2) {
            (Some(s), Some(v)) => Some((s, v)),
            _ => return Err(FitError::MissingSigma2),
        }
    } else {
        None
    };
    let layout = ThetaLayout {
        p_outcome: outcome.beta.len() - 3,
        p_mediator: mediator.gamma.len() - 2,
        has_sigma2: sigma.is_some(),
    };
    let dim = layout.len();
    let mut theta = Vec::with_capacity(dim);
    theta.extend_from_slice(&outcome.beta);
    theta.extend_from_slice(&mediator.gamma);
    let mut cov = DMatrix::zeros(dim, dim);
    let (kb, kg) = (layout.beta_len(), layout.gamma_len());
    cov.view_mut((0, 0), (kb, kb)).copy_from(&outcome.cov_beta);
    cov.view_mut((kb, kb), (kg, kg)).copy_from(&mediator.cov_gamma);
    if let Some((s, v)) = sigma {
        theta.push(s);
        cov[(dim - 1, dim - 1)] = v;
    }
    Ok(ThetaEstimate {
        theta,
        cov_theta: cov,
        layout,
    })
}

/// Both regressions and the stacked θ̂ for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModels {
    pub outcome: FittedOutcome,
    pub mediator: FittedMediator,
    pub theta: ThetaEstimate,
}

/// Fit both models and stack θ̂, carrying σ² whenever the mediator is
/// continuous.
pub fn fit_models(data: &Dataset, kind: CovarianceKind) -> Result<FittedModels, FitError> {
    let outcome = fit_outcome_model_with(data, kind)?;
    let mediator = fit_mediator_model_with(data, kind)?;
    let theta = assemble_theta(&outcome, &mediator, !data.m_binary())?;
    Ok(FittedModels {
        outcome,
        mediator,
        theta,
    })
}
