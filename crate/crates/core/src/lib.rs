//! Product-method mediation analysis.
//!
//! The crate fits an outcome regression `g(E[Y|X,M,W]) = β0 + β1·X + β2·M + β3ᵀW`
//! and a mediator regression `h(E[M|X,W]) = γ0 + γ1·X + γ2ᵀW` by estimating
//! equations, then evaluates the natural indirect effect (NIE), natural direct
//! effect (NDE), total effect (TE) and mediation proportion (MP) for the four
//! outcome/mediator data types:
//!
//! | case  | outcome    | mediator   | flavors                          |
//! |-------|------------|------------|----------------------------------|
//! | Case1 | continuous | continuous | exact                            |
//! | Case2 | continuous | binary     | exact                            |
//! | Case3 | binary     | continuous | exact (GHQ), approximate, probit |
//! | Case4 | binary     | binary     | exact, approximate               |
//!
//! Intervals come from the multivariate delta method over a block-diagonal
//! parameter covariance ([`inference::delta_variance`]) or from the
//! nonparametric percentile bootstrap ([`inference::percentile_bootstrap`]).
//! The [`simulation`] module is a Monte Carlo harness that solves for
//! data-generating coefficients from (TE, MP) targets and reports percent bias,
//! coverage and variance ratios.
//!
//! Replicate loops (bootstrap, simulation) run on rayon when the `parallel`
//! feature is enabled (the default). Every replicate draws from its own
//! random stream keyed by `(seed, replicate index)`, so serial and parallel
//! runs produce bit-identical results.

pub mod data;
pub mod glm;
pub mod inference;
pub mod measures;
pub mod model;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod simulation;

pub use data::{DataError, Dataset};
pub use glm::{fit_glm, Design, FitError, GlmFit, LinkFunction};
pub use inference::{
    delta_interval, delta_variance, percentile_bootstrap, BootstrapConfig, BootstrapIntervals,
    InferenceError, IntervalEstimate, IntervalMethod,
};
pub use measures::{
    evaluate, CaseType, Flavor, MeasureError, MeasureSet, MediationRequest, DEFAULT_GHQ_NODES,
    MP_GUARD,
};
pub use model::{
    assemble_theta, fit_mediator_model, fit_models, fit_outcome_model, CovarianceKind,
    FittedMediator, FittedModels, FittedOutcome, Params, ThetaEstimate, ThetaLayout,
};
pub use par::Execution;
pub use quadrature::{logistic_normal_ratio, GaussHermite, QuadratureError};
pub use simulation::{
    generate, prevalence_sweep, run_scenario, solve_design, DesignParams, Measure, MetricRow,
    SimulationError, SimulationMetrics, SimulationScenario, SweepCell,
};
