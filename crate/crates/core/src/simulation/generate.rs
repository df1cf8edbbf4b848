use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{DesignParams, SimulationScenario};
use crate::data::Dataset;
use crate::glm::expit;
use crate::rng::{stream, Domain};

/// Mediator error with mean 0, variance 1 and the requested skewness.
enum MediatorError {
    Normal,
    /// `(b − kθ)/(√k θ)` for `b ~ Gamma(k, θ)`, `k = (2/s)²`, `θ = s/2`.
    Gamma { dist: Gamma<f64>, shape: f64, scale: f64 },
}

impl MediatorError {
    fn new(skewness: f64) -> Self {
        if skewness == 0.0 {
            return MediatorError::Normal;
        }
        let shape = (2.0 / skewness).powi(2);
        let scale = skewness / 2.0;
        MediatorError::Gamma {
            dist: Gamma::new(shape, scale).expect("positive shape and scale"),
            shape,
            scale,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            MediatorError::Normal => rng.sample(StandardNormal),
            MediatorError::Gamma { dist, shape, scale } => {
                (dist.sample(rng) - shape * scale) / (shape.sqrt() * scale)
            }
        }
    }
}

/// Draw replicate `rep` of `scenario` from the coefficients in `params`.
/// The draw depends only on `(scenario.seed, rep)`.
pub fn generate(scenario: &SimulationScenario, params: &DesignParams, rep: u64) -> Dataset {
    let mut rng = stream(scenario.seed, Domain::Generate, rep, 0);
    let n = scenario.n;
    let case = scenario.case;
    let error = MediatorError::new(scenario.error_skewness);
    let sigma = params.sigma2.unwrap_or(1.0).sqrt();
    let (mut x, mut m, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let xi = f64::from(u8::from(rng.gen_bool(0.5)));
        let mu_m = params.gamma0 + params.gamma1 * xi;
        let mi = if case.m_binary() {
            f64::from(u8::from(rng.gen_bool(expit(mu_m))))
        } else {
            mu_m + sigma * error.sample(&mut rng)
        };
        let eta = params.beta0 + params.beta1 * xi + params.beta2 * mi;
        let yi = if case.y_binary() {
            f64::from(u8::from(rng.gen_bool(expit(eta))))
        } else {
            eta + rng.sample::<f64, _>(StandardNormal)
        };
        x.push(xi);
        m.push(mi);
        y.push(yi);
    }
    Dataset::new(y, x, m, Vec::new(), case.y_binary(), case.m_binary())
        .expect("generated columns are finite, binary where declared, and n ≥ 4")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::CaseType;
    use crate::simulation::solve_design;

    fn moments(v: &[f64]) -> (f64, f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        (mean, m2, m3 / m2.powf(1.5))
    }

    #[test]
    fn gamma_errors_are_standardised() {
        let e = MediatorError::new(2.0);
        let mut rng = stream(7, Domain::Generate, 0, 0);
        let draws: Vec<f64> = (0..1_000_000).map(|_| e.sample(&mut rng)).collect();
        let (mean, var, skew) = moments(&draws);
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01, "{var}");
        assert!((skew - 2.0).abs() < 0.05, "{skew}");
    }

    #[test]
    fn normal_errors_are_symmetric() {
        let e = MediatorError::new(0.0);
        let mut rng = stream(7, Domain::Generate, 1, 0);
        let draws: Vec<f64> = (0..1_000_000).map(|_| e.sample(&mut rng)).collect();
        let (_, var, skew) = moments(&draws);
        assert!(skew.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = SimulationScenario::new(CaseType::Case4, 500, 2f64.ln(), 0.5);
        let p = solve_design(&s).unwrap();
        assert_eq!(generate(&s, &p, 3), generate(&s, &p, 3));
        assert_ne!(generate(&s, &p, 3), generate(&s, &p, 4));
    }
}
