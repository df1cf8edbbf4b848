//! Canonical-link generalized linear models solved by iteratively reweighted
//! least squares.
//!
//! The working variance is the canonical one (constant for the identity link,
//! `μ(1 − μ)` for the logit link), so the estimating equation
//! `Σ (∂μᵢ/∂b) Vᵢ⁻¹ (yᵢ − μᵢ) = 0` reduces to `Σ xᵢ (yᵢ − μᵢ) = 0` and the
//! Newton step on it is exactly one IRLS step.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

/// Maximum number of Newton/IRLS updates.
pub const MAX_ITERATIONS: usize = 100;
/// Convergence requires every coefficient step below this (relative to
/// `max(1, |coef|)`).
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Convergence requires the max-norm of the summed score below this times `n`.
pub const SCORE_TOLERANCE: f64 = 1e-8;
/// A logit fit whose linear predictor leaves `[-30, 30]` before converging is
/// treated as separated.
pub const SEPARATION_ETA: f64 = 30.0;

// Below this the scaled cross-product has a column explained to within
// 1e-11 by the others.
const RANK_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkFunction {
    Identity,
    Logit,
}

impl LinkFunction {
    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Identity => "identity",
            LinkFunction::Logit => "logit",
        }
    }

    #[inline]
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => eta,
            LinkFunction::Logit => expit(eta),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("design matrix is not of full column rank (column {column} is collinear with earlier columns)")]
    RankDeficient { column: usize },
    #[error("logistic fit is separating: |linear predictor| reached {max_eta:.1} at iteration {iteration}")]
    Separation { iteration: usize, max_eta: f64 },
    #[error("no convergence after {iterations} iterations (last score max-norm {score:.3e})")]
    NonConvergence { iterations: usize, score: f64 },
    #[error("logit link needs a 0/1 response; record {row} holds {value}")]
    NonBinaryResponse { row: usize, value: f64 },
    #[error("design has {rows} rows but the response has {response} values")]
    DimensionMismatch { rows: usize, response: usize },
    #[error("mediator model carries no residual variance (logit link)")]
    MissingSigma2,
}

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Design {
    /// Builds `[1, c₀, c₁, …]` from equal-length columns.
    pub fn with_intercept(columns: &[&[f64]]) -> Self {
        let nrows = columns.first().map_or(0, |c| c.len());
        let ncols = columns.len() + 1;
        let mut data = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            data.push(1.0);
            for c in columns {
                data.push(c[i]);
            }
        }
        Self { nrows, ncols, data }
    }

    /// Builds a design from explicit rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged design rows");
        Self {
            nrows,
            ncols,
            data: rows.concat(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn linear_predictor(&self, coef: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| dot(self.row(i), coef)).collect()
    }

    /// `Σ wᵢ xᵢ xᵢᵀ`
    fn weighted_gram(&self, weights: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let k = self.ncols;
        let mut acc = vec![0.0; k * k];
        for i in 0..self.nrows {
            let w = weights(i);
            if w == 0.0 {
                continue;
            }
            let row = self.row(i);
            for a in 0..k {
                let wa = w * row[a];
                for b in a..k {
                    acc[a * k + b] += wa * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                acc[a * k + b] = acc[b * k + a];
            }
        }
        DMatrix::from_row_slice(k, k, &acc)
    }

    /// `Σ rᵢ xᵢ`
    fn weighted_sum(&self, r: &[f64]) -> DVector<f64> {
        let mut acc = DVector::zeros(self.ncols);
        for (i, &ri) in r.iter().enumerate() {
            for (a, &x) in self.row(i).iter().enumerate() {
                acc[a] += ri * x;
            }
        }
        acc
    }
}

/// Result of [`fit_glm`].
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coef: Vec<f64>,
    /// Inverse information, scaled by the residual mean square for the identity link.
    pub cov_model: DMatrix<f64>,
    /// `A⁻¹ B A⁻ᵀ` with `A` the score derivative and `B` the outer product of
    /// per-record scores.
    pub cov_sandwich: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Fitted means `μᵢ`.
    pub fitted: Vec<f64>,
    /// Max-norm of `Σ xᵢ (yᵢ − μᵢ)` at the returned coefficients.
    pub score_norm: f64,
}

/// Solve the canonical estimating equation for `response` on `design`.
pub fn fit_glm(design: &Design, response: &[f64], link: LinkFunction) -> Result<GlmFit, FitError> {
    let n = design.nrows();
    let k = design.ncols();
    if response.len() != n {
        return Err(FitError::DimensionMismatch {
            rows: n,
            response: response.len(),
        });
    }
    if link == LinkFunction::Logit {
        if let Some((row, &value)) = response
            .iter()
            .enumerate()
            .find(|(_, &v)| v != 0.0 && v != 1.0)
        {
            return Err(FitError::NonBinaryResponse { row, value });
        }
    }
    check_rank(design)?;

    let score_tol = SCORE_TOLERANCE * n as f64;
    let mut coef = vec![0.0; k];
    let mut eta = vec![0.0; n];
    let mut last_step = f64::INFINITY;

    for iteration in 0..=MAX_ITERATIONS {
        let mu: Vec<f64> = eta.iter().map(|&e| link.inverse(e)).collect();
        let resid: Vec<f64> = response.iter().zip(&mu).map(|(y, m)| y - m).collect();
        let score = design.weighted_sum(&resid);
        let score_norm = score.amax();

        if last_step < STEP_TOLERANCE && score_norm < score_tol {
            return Ok(finish(design, link, coef, mu, &resid, iteration, score_norm));
        }
        let max_eta = eta.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
        if link == LinkFunction::Logit && max_eta > SEPARATION_ETA {
            return Err(FitError::Separation {
                iteration,
                max_eta,
            });
        }
        if iteration == MAX_ITERATIONS {
            return Err(FitError::NonConvergence {
                iterations: iteration,
                score: score_norm,
            });
        }

        let info = information(design, link, &mu);
        let step = match Cholesky::new(info) {
            Some(chol) => chol.solve(&score),
            None => {
                return Err(FitError::NonConvergence {
                    iterations: iteration,
                    score: score_norm,
                })
            }
        };

        let mut scale = 1.0;
        let mut trial = coef.clone();
        let mut trial_eta;
        let base_ll = log_likelihood(link, response, &eta);
        loop {
            for (t, (c, s)) in trial.iter_mut().zip(coef.iter().zip(step.iter())) {
                *t = c + scale * s;
            }
            trial_eta = design.linear_predictor(&trial);
            let ll = log_likelihood(link, response, &trial_eta);
            // step halving only matters for the logit link; the identity
            // objective is quadratic and the full step is its minimiser
            if link == LinkFunction::Identity || ll >= base_ll - 1e-12 * base_ll.abs() || scale < 1e-6
            {
                break;
            }
            scale *= 0.5;
        }
        last_step = trial
            .iter()
            .zip(&coef)
            .map(|(t, c)| (t - c).abs() / t.abs().max(1.0))
            .fold(0.0, f64::max);
        coef = trial;
        eta = trial_eta;
    }
    unreachable!("loop returns on its final iteration")
}

fn finish(
    design: &Design,
    link: LinkFunction,
    coef: Vec<f64>,
    fitted: Vec<f64>,
    resid: &[f64],
    iterations: usize,
    score_norm: f64,
) -> GlmFit {
    let n = design.nrows();
    let k = design.ncols();
    let info = information(design, link, &fitted);
    let bread = invert_spd(info);
    let meat = design.weighted_gram(|i| resid[i] * resid[i]);
    let cov_sandwich = symmetrize(&bread * meat * &bread);
    let dispersion = match link {
        LinkFunction::Identity => resid.iter().map(|r| r * r).sum::<f64>() / (n - k) as f64,
        LinkFunction::Logit => 1.0,
    };
    GlmFit {
        coef,
        cov_model: bread * dispersion,
        cov_sandwich,
        converged: true,
        iterations,
        fitted,
        score_norm,
    }
}

fn information(design: &Design, link: LinkFunction, mu: &[f64]) -> DMatrix<f64> {
    match link {
        LinkFunction::Identity => design.weighted_gram(|_| 1.0),
        LinkFunction::Logit => design.weighted_gram(|i| mu[i] * (1.0 - mu[i])),
    }
}

fn log_likelihood(link: LinkFunction, y: &[f64], eta: &[f64]) -> f64 {
    match link {
        LinkFunction::Identity => -0.5 * y.iter().zip(eta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        LinkFunction::Logit => y.iter().zip(eta).map(|(&yi, &e)| yi * e - softplus(e)).sum(),
    }
}

fn check_rank(design: &Design) -> Result<(), FitError> {
    let gram = design.weighted_gram(|_| 1.0);
    let k = gram.nrows();
    let d: Vec<f64> = (0..k).map(|j| gram[(j, j)]).collect();
    if let Some(column) = d.iter().position(|&v| v <= 0.0) {
        return Err(FitError::RankDeficient { column });
    }
    let scaled = DMatrix::from_fn(k, k, |a, b| gram[(a, b)] / (d[a] * d[b]).sqrt());
    let chol = Cholesky::new(scaled).ok_or(FitError::RankDeficient { column: k - 1 })?;
    let l = chol.l_dirty();
    match (0..k).find(|&j| l[(j, j)] * l[(j, j)] < RANK_TOLERANCE) {
        Some(column) => Err(FitError::RankDeficient { column }),
        None => Ok(()),
    }
}

pub(crate) fn invert_spd(m: DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows();
    match Cholesky::new(m.clone()) {
        Some(chol) => symmetrize(chol.inverse()),
        None => m.try_inverse().unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN)),
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 / (1 + e^{-x})` without overflow.
#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_least_squares_is_exact() {
        let x: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let m: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = x.iter().zip(&m).map(|(x, m)| 1.0 + 2.0 * x + 3.0 * m).collect();
        let fit = fit_glm(&Design::with_intercept(&[&x, &m]), &y, LinkFunction::Identity).unwrap();
        for (c, t) in fit.coef.iter().zip([1.0, 2.0, 3.0]) {
            assert!((c - t).abs() < 1e-12, "{c} vs {t}");
        }
        assert!(fit.cov_sandwich.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn balanced_intercept_only_logit_is_zero() {
        let y: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
        let design = Design::from_rows(&vec![vec![1.0]; 50]);
        let fit = fit_glm(&design, &y, LinkFunction::Logit).unwrap();
        assert_eq!(fit.coef[0], 0.0);
        // information n/4, so variance 4/n
        assert_relative_eq!(fit.cov_model[(0, 0)], 4.0 / 50.0, max_relative = 1e-12);
    }

    #[test]
    fn constant_response_separates() {
        let design = Design::with_intercept(&[&[0.0, 1.0, 2.0, 3.0, 4.0]]);
        let err = fit_glm(&design, &[0.0; 5], LinkFunction::Logit).unwrap_err();
        assert!(matches!(err, FitError::Separation { .. }), "{err:?}");
    }

    #[test]
    fn perfectly_separated_covariate_is_detected() {
        let x = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let err = fit_glm(&Design::with_intercept(&[&x]), &y, LinkFunction::Logit).unwrap_err();
        assert!(matches!(err, FitError::Separation { .. }), "{err:?}");
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let z: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let y = x.clone();
        let err = fit_glm(&Design::with_intercept(&[&x, &z]), &y, LinkFunction::Identity).unwrap_err();
        assert_eq!(err, FitError::RankDeficient { column: 2 });
    }

    #[test]
    fn logit_rejects_non_binary_response() {
        let design = Design::with_intercept(&[&[0.0, 1.0, 2.0, 3.0]]);
        let err = fit_glm(&design, &[0.0, 1.0, 0.5, 1.0], LinkFunction::Logit).unwrap_err();
        assert_eq!(err, FitError::NonBinaryResponse { row: 2, value: 0.5 });
    }

    #[test]
    fn identity_fit_matches_normal_equations_and_sandwich_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|&v| 0.5 - v + rng.gen::<f64>() * v).collect();
        let design = Design::with_intercept(&[&x]);
        let fit = fit_glm(&design, &y, LinkFunction::Identity).unwrap();

        let xm = DMatrix::from_fn(n, 2, |i, j| design.row(i)[j]);
        let yv = DVector::from_column_slice(&y);
        let xtx_inv = (xm.transpose() * &xm).try_inverse().unwrap();
        let ols = &xtx_inv * xm.transpose() * &yv;
        for j in 0..2 {
            assert_relative_eq!(fit.coef[j], ols[j], max_relative = 1e-10);
        }
        // HC0 sandwich by the textbook formula
        let r = &yv - &xm * &ols;
        let meat = DMatrix::from_fn(2, 2, |a, b| (0..n).map(|i| r[i] * r[i] * xm[(i, a)] * xm[(i, b)]).sum());
        let hc0 = &xtx_inv * meat * &xtx_inv;
        for (a, b) in fit.cov_sandwich.iter().zip(hc0.iter()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-8);
        }
        assert!(fit.score_norm < 1e-8 * n as f64);
    }
}
