//! Conjugate normal-normal model with optional synthetic likelihood noise.
//!
//! `y_i ~ N(theta, obs_var)`, `theta ~ N(prior_mean, prior_var)`. The likelihood
//! is exact; `noise_sigma2 > 0` multiplies it by `e^z` with
//! `z ~ N(-noise_sigma2/2, noise_sigma2)`, an unbiased estimator with known
//! log-scale variance. Every tempered density `prior^{1-a} (prior * lik)^a` is
//! normal, which makes this the oracle model for the sampler, the evidence
//! estimator and the perfect-mixing experiments.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::dist::normal_logpdf;
use crate::error::{invalid, Result};
use crate::likelihood::{replicate_estimate, EstimatorSettings, InitialDensity, LikelihoodEstimate, Model, VarianceMethod};
use crate::param::{Layout, Support};

#[derive(Debug, Clone)]
pub struct GaussianToy {
    pub y: Vec<f64>,
    pub obs_var: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub noise_sigma2: f64,
    layout: Arc<Layout>,
}

impl GaussianToy {
    pub fn new(y: Vec<f64>, obs_var: f64, prior_mean: f64, prior_var: f64) -> Result<Self> {
        if y.is_empty() {
            return invalid("toy model needs at least one observation");
        }
        if !(obs_var > 0.0 && prior_var > 0.0) {
            return invalid("toy variances must be positive");
        }
        Ok(Self {
            y,
            obs_var,
            prior_mean,
            prior_var,
            noise_sigma2: 0.0,
            layout: Layout::new([("theta", Support::Real)]),
        })
    }

    /// Simulates `n` observations around `theta` and wraps them in a model.
    pub fn simulate<R: Rng + ?Sized>(
        n: usize,
        theta: f64,
        obs_var: f64,
        prior_mean: f64,
        prior_var: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let d = Normal::new(theta, obs_var.sqrt()).map_err(|e| crate::AiselError::InvalidArgument(e.to_string()))?;
        Self::new((0..n).map(|_| d.sample(rng)).collect(), obs_var, prior_mean, prior_var)
    }

    pub fn with_noise(mut self, sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0) {
            return invalid("noise variance must be nonnegative");
        }
        self.noise_sigma2 = sigma2;
        Ok(self)
    }

    pub fn exact_loglik(&self, theta: f64) -> f64 {
        self.y.iter().map(|&y| normal_logpdf(y, theta, self.obs_var)).sum()
    }

    /// Mean and variance of the normalized `prior^{1-a} (prior * lik)^a`.
    pub fn tempered(&self, a: f64) -> (f64, f64) {
        let n = self.y.len() as f64;
        let sum: f64 = self.y.iter().sum();
        let precision = 1.0 / self.prior_var + a * n / self.obs_var;
        let mean = (self.prior_mean / self.prior_var + a * sum / self.obs_var) / precision;
        (mean, 1.0 / precision)
    }

    pub fn posterior(&self) -> (f64, f64) {
        self.tempered(1.0)
    }

    /// Exact `E_{xi_a}[log p(y | theta)]`, the power-posterior integrand.
    pub fn expected_loglik(&self, a: f64) -> f64 {
        let (m, v) = self.tempered(a);
        let n = self.y.len() as f64;
        let ss: f64 = self.y.iter().map(|y| (y - m).powi(2)).sum();
        -0.5 * n * (2.0 * std::f64::consts::PI * self.obs_var).ln() - (ss + n * v) / (2.0 * self.obs_var)
    }

    /// Closed-form `log p(y)`; `y ~ N(m 1, s^2 I + v 1 1')`.
    pub fn log_evidence(&self) -> f64 {
        let n = self.y.len() as f64;
        let s2 = self.obs_var;
        let v = self.prior_var;
        let d: Vec<f64> = self.y.iter().map(|y| y - self.prior_mean).collect();
        let sum_d: f64 = d.iter().sum();
        let ss: f64 = d.iter().map(|x| x * x).sum();
        // Sherman-Morrison for the inverse, matrix determinant lemma for the det.
        let quad = ss / s2 - v * sum_d * sum_d / (s2 * (s2 + n * v));
        let logdet = n * s2.ln() + (1.0 + n * v / s2).ln();
        -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
    }

    pub fn prior_density(&self) -> NormalDensity {
        NormalDensity { mean: self.prior_mean, var: self.prior_var }
    }

    fn noisy_draw<R: Rng + ?Sized>(&self, exact: f64, rng: &mut R) -> f64 {
        if self.noise_sigma2 == 0.0 {
            exact
        } else {
            let z: f64 = StandardNormal.sample(rng);
            exact - 0.5 * self.noise_sigma2 + self.noise_sigma2.sqrt() * z
        }
    }
}

impl Model for GaussianToy {
    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        normal_logpdf(theta[0], self.prior_mean, self.prior_var)
    }

    fn estimate<R: Rng + ?Sized>(&self, theta: &[f64], settings: &EstimatorSettings, rng: &mut R) -> Result<LikelihoodEstimate> {
        let exact = self.exact_loglik(theta[0]);
        let n = settings.n_particles;
        match settings.variance {
            None => Ok(LikelihoodEstimate::new(self.noisy_draw(exact, rng), n)),
            Some(VarianceMethod::Replicate(k)) => replicate_estimate(k, n, || Ok(self.noisy_draw(exact, rng))),
            // The noise law is known, so its variance is reported directly.
            Some(VarianceMethod::Delta | VarianceMethod::Jackknife) => {
                Ok(LikelihoodEstimate::new(self.noisy_draw(exact, rng), n).with_var_log(self.noise_sigma2))
            }
        }
    }

    fn default_variance_method(&self) -> VarianceMethod {
        VarianceMethod::Delta
    }
}

/// A univariate normal used as prior and initial density.
#[derive(Debug, Clone, Copy)]
pub struct NormalDensity {
    pub mean: f64,
    pub var: f64,
}

impl InitialDensity for NormalDensity {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: f64 = StandardNormal.sample(rng);
        vec![self.mean + self.var.sqrt() * z]
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        normal_logpdf(theta[0], self.mean, self.var)
    }
}
