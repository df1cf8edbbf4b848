//! Gauss–Hermite quadrature for logistic-normal integrals.
//!
//! The central quantity is
//!
//! ```text
//! R(a, σ², b, β2) = ln { ∫ e^{β2 m} τ(m) dm / ∫ τ(m) dm },
//! τ(m) = exp(a·m/σ² − m²/(2σ²)) / (1 + exp(b + β2 m)),
//! ```
//!
//! i.e. a ratio of two expectations over `m ~ N(a, σ²)`. Writing
//! `z = b + β2 m ~ N(μ, s²)` with `μ = b + β2 a`, `s = |β2| σ`, and tilting the
//! numerator's Gaussian by `e^{β2 m}` gives
//!
//! ```text
//! R = β2 a + β2² σ² / 2 + G(μ + s², s) − G(μ, s),   G(μ, s) = ln E[1 / (1 + e^z)].
//! ```
//!
//! `G` is evaluated with a Gauss–Hermite rule after centring at the mean and
//! scaling by `√2 s`. Plain Gauss–Hermite converges slowly here because the
//! logistic factor has poles at `z = ±iπ(2k+1)`, which sit close to the real
//! axis once `s` exceeds about 1. The first `K` pole pairs are removed with the
//! partial-fraction expansion
//!
//! ```text
//! 1 / (1 + e^z) = 1/2 − Σ_k 2z / (z² + c_k²),   c_k = (2k + 1)π,
//! ```
//!
//! whose Gaussian expectations have the closed form
//! `E[2z / (z² + c²)] = −(√(2π)/s) · Im w((ic − μ) / (√2 s))` in the Faddeeva
//! function `w`. The remainder is analytic in a strip of half-width `c_K` and
//! is what the quadrature rule integrates. With `K` chosen so the remaining
//! poles sit at least [`POLE_CLEARANCE`] standardised units from the real axis,
//! 40 nodes are accurate to about 1e-13.

use std::sync::OnceLock;

use errorfunctions::ComplexErrorFunctions;
use num_complex::Complex64;
use thiserror::Error;

use crate::glm::softplus;

/// Distance (in units of the Gauss–Hermite variable) the nearest retained
/// logistic pole must keep from the real axis.
pub const POLE_CLEARANCE: f64 = 2.5;

// Beyond this scale E[1/(1+e^z)] can underflow relative to the subtracted
// terms, so the rule is applied directly in log space instead.
const MAX_POLE_SUBTRACTION_SD: f64 = 12.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("Gauss–Hermite rule needs at least 2 nodes, got {0}")]
    NodeCount(usize),
    #[error("invalid logistic-normal input: {0}")]
    InvalidInput(&'static str),
}

/// Gauss–Hermite rule for `∫ f(t) e^{−t²} dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes are the roots of the degree-`n` Hermite polynomial, found by
    /// Newton's method on the orthonormal recurrence.
    pub fn new(n: usize) -> Result<Self, QuadratureError> {
        if n < 2 {
            return Err(QuadratureError::NodeCount(n));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            for _ in 0..100 {
                let (p1, p2) = hermite_orthonormal(n, z);
                let dz = p1 / ((2.0 * nf).sqrt() * p2);
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, p2) = hermite_orthonormal(n, z);
            let pp = (2.0 * nf).sqrt() * p2;
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // ascending order
        nodes.reverse();
        weights.reverse();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(Z)]` for `Z ~ N(mean, sd²)`.
    pub fn expectation(&self, mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mean + scale * t))
            .sum();
        sum / std::f64::consts::PI.sqrt()
    }
}

/// Returns `(p_n(z), p_{n-1}(z))` of the orthonormal Hermite sequence.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// Run `f` with the `n`-node rule, reusing cached rules for the common sizes.
pub fn with_rule<R>(n: usize, f: impl FnOnce(&GaussHermite) -> R) -> Result<R, QuadratureError> {
    static RULE_40: OnceLock<GaussHermite> = OnceLock::new();
    static RULE_80: OnceLock<GaussHermite> = OnceLock::new();
    match n {
        40 => Ok(f(RULE_40.get_or_init(|| GaussHermite::new(40).expect("40 ≥ 2")))),
        80 => Ok(f(RULE_80.get_or_init(|| GaussHermite::new(80).expect("80 ≥ 2")))),
        _ => Ok(f(&GaussHermite::new(n)?)),
    }
}

/// `ln { ∫ e^{β2 m} τ dm / ∫ τ dm }` for the logistic-normal integrand τ with
/// mediator mean `a`, variance `sigma2`, outcome linear predictor `b` and
/// mediator coefficient `beta2`.
pub fn logistic_normal_ratio(
    a: f64,
    sigma2: f64,
    b: f64,
    beta2: f64,
    nodes: usize,
) -> Result<f64, QuadratureError> {
    with_rule(nodes, |rule| log_ratio(rule, a, sigma2, b, beta2))?
}

pub(crate) fn log_ratio(
    rule: &GaussHermite,
    a: f64,
    sigma2: f64,
    b: f64,
    beta2: f64,
) -> Result<f64, QuadratureError> {
    if !(a.is_finite() && b.is_finite() && beta2.is_finite()) {
        return Err(QuadratureError::InvalidInput("non-finite mean or coefficient"));
    }
    if !sigma2.is_finite() || sigma2 < 0.0 {
        return Err(QuadratureError::InvalidInput("variance must be finite and non-negative"));
    }
    if beta2 == 0.0 {
        return Ok(0.0);
    }
    let mu = b + beta2 * a;
    let s2 = beta2 * beta2 * sigma2;
    let s = s2.sqrt();
    Ok(beta2 * a + 0.5 * s2 + log_mean_logistic_complement(rule, mu + s2, s)
        - log_mean_logistic_complement(rule, mu, s))
}

/// `ln E[1 / (1 + e^Z)]` for `Z ~ N(mu, s²)`.
pub(crate) fn log_mean_logistic_complement(rule: &GaussHermite, mu: f64, s: f64) -> f64 {
    // 1/(1+e^z) = e^{-z} / (1+e^{-z}); tilting the Gaussian by e^{-z} maps the
    // mean to s² − mu, so the evaluation always happens where the expectation
    // is not exponentially small.
    if mu > 0.5 * s * s {
        return -mu + 0.5 * s * s + log_mean_logistic_complement(rule, s * s - mu, s);
    }
    if s == 0.0 {
        return -softplus(mu);
    }
    if s > MAX_POLE_SUBTRACTION_SD {
        return log_mean_direct(rule, mu, s);
    }

    let sqrt2s = std::f64::consts::SQRT_2 * s;
    let poles = pole_count(s);
    let centres: Vec<f64> = (0..poles)
        .map(|k| (2 * k + 1) as f64 * std::f64::consts::PI)
        .collect();
    let remainder = rule.expectation(mu, s, |z| {
        let mut r = logistic_complement(z) - 0.5;
        for c in &centres {
            r += 2.0 * z / (z * z + c * c);
        }
        r
    });
    let subtracted: f64 = centres
        .iter()
        .map(|&c| {
            let xi = Complex64::new(-mu / sqrt2s, c / sqrt2s);
            -(2.0 * std::f64::consts::PI).sqrt() / s * xi.w().im
        })
        .sum();
    (0.5 - subtracted + remainder).ln()
}

/// Number of pole pairs to subtract so the nearest retained pole is at least
/// [`POLE_CLEARANCE`] from the real axis in the standardised variable.
pub(crate) fn pole_count(s: f64) -> usize {
    let k = (POLE_CLEARANCE * std::f64::consts::SQRT_2 * s / std::f64::consts::PI - 1.0) / 2.0;
    if k <= 0.0 {
        0
    } else {
        k.ceil() as usize
    }
}

fn log_mean_direct(rule: &GaussHermite, mu: f64, s: f64) -> f64 {
    let scale = std::f64::consts::SQRT_2 * s;
    let terms: Vec<f64> = rule
        .nodes()
        .iter()
        .zip(rule.weights())
        .map(|(&t, &w)| w.ln() - softplus(mu + scale * t))
        .collect();
    log_sum_exp(&terms) - 0.5 * std::f64::consts::PI.ln()
}

#[inline]
fn logistic_complement(z: f64) -> f64 {
    crate::glm::expit(-z)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
