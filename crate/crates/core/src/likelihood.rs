//! Unbiased likelihood estimators and their log-scale variance diagnostics.
//!
//! Every estimator returns `log p_hat` where `p_hat` is unbiased for `p(y | theta)`
//! in the natural domain. The log-scale noise `z = log p_hat - log p` has a
//! variance that shrinks like `gamma^2(theta) / N`; estimates of `Var(z)` and of
//! `gamma^2 = N Var(z)` ride along with each estimate so the particle-count tuner
//! can reuse them.

use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::param::{Layout, ParamVector};
use crate::weights::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodEstimate {
    pub log_value: f64,
    pub n_particles: usize,
    /// Estimate of `Var(log p_hat)`.
    pub var_log: Option<f64>,
    /// `n_particles * var_log`.
    pub gamma2: Option<f64>,
}

impl LikelihoodEstimate {
    pub fn new(log_value: f64, n_particles: usize) -> Self {
        Self { log_value, n_particles, var_log: None, gamma2: None }
    }

    pub fn with_var_log(mut self, var_log: f64) -> Self {
        self.var_log = Some(var_log);
        self.gamma2 = Some(var_log * self.n_particles as f64);
        self
    }
}

/// How `Var(log p_hat)` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMethod {
    /// Leave-one-out pseudo-values over the inner importance weights.
    Jackknife,
    /// `sum u^2 / (sum u)^2 - 1/N` over the inner weights.
    Delta,
    /// Sample variance of `k` independent estimates.
    Replicate(usize),
}

impl std::str::FromStr for VarianceMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "jackknife" => Ok(Self::Jackknife),
            "delta" => Ok(Self::Delta),
            other => match other.strip_prefix("replicate") {
                Some(rest) => {
                    let k = rest.trim_start_matches([':', '(']).trim_end_matches(')');
                    let k: usize = if k.is_empty() { 20 } else { k.parse().map_err(|_| format!("bad replicate count `{k}`"))? };
                    Ok(Self::Replicate(k))
                }
                None => Err(format!("unknown variance method `{other}`")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSettings {
    pub n_particles: usize,
    /// `None` skips the variance diagnostic entirely.
    pub variance: Option<VarianceMethod>,
}

impl EstimatorSettings {
    pub fn new(n_particles: usize) -> Self {
        Self { n_particles, variance: None }
    }

    pub fn with_variance(mut self, method: VarianceMethod) -> Self {
        self.variance = Some(method);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return invalid("number of likelihood particles must be positive");
        }
        if let Some(VarianceMethod::Replicate(k)) = self.variance {
            if k < 2 {
                return invalid("replicate variance needs at least 2 replicates");
            }
        }
        Ok(())
    }
}

/// A Bayesian model with a tractable prior and an unbiasedly estimable likelihood.
///
/// Densities take parameters on the constrained scale.
pub trait Model: Sync {
    fn layout(&self) -> &Arc<Layout>;

    /// Log prior density (up to a constant for improper components); `-inf`
    /// outside the support.
    fn log_prior(&self, theta: &[f64]) -> f64;

    /// One draw of `log p_hat_N(y | theta)`.
    fn estimate<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        settings: &EstimatorSettings,
        rng: &mut R,
    ) -> Result<LikelihoodEstimate>;

    /// The variance diagnostic that is cheapest and valid for this estimator.
    fn default_variance_method(&self) -> VarianceMethod {
        VarianceMethod::Delta
    }

    fn dim(&self) -> usize {
        self.layout().dim()
    }
}

/// An easily sampled density to start annealing from.
pub trait InitialDensity: Sync {
    /// A draw on the constrained scale. It may fall outside a model's support;
    /// callers redraw in that case.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;

    /// Normalized log density on the constrained scale.
    fn log_density(&self, theta: &[f64]) -> f64;
}

/// Checks dimensions and settings, then delegates to the model's estimator.
pub fn estimate_loglik<M: Model, R: Rng + ?Sized>(
    model: &M,
    theta: &ParamVector,
    settings: &EstimatorSettings,
    rng: &mut R,
) -> Result<LikelihoodEstimate> {
    settings.validate()?;
    if theta.dim() != model.dim() {
        return invalid(format!("model has dimension {}, parameter has {}", model.dim(), theta.dim()));
    }
    model.estimate(&theta.constrained(), settings, rng)
}

/// Runs `single` `k` times; the first draw is reported as the estimate (so it
/// stays unbiased with `N` particles) and all `k` feed the sample variance.
pub fn replicate_estimate<F>(k: usize, n_particles: usize, mut single: F) -> Result<LikelihoodEstimate>
where
    F: FnMut() -> Result<f64>,
{
    if k < 2 {
        return invalid("replicate variance needs at least 2 replicates");
    }
    let draws = (0..k).map(|_| single()).collect::<Result<Vec<f64>>>()?;
    let var = var_log_estimate(VarianceSample::Replicates(&draws), VarianceMethod::Replicate(k))?;
    Ok(LikelihoodEstimate::new(draws[0], n_particles).with_var_log(var))
}

/// Input to [`var_log_estimate`].
#[derive(Debug, Clone, Copy)]
pub enum VarianceSample<'a> {
    /// Log inner importance weights `log u_j` of a single mean-of-weights estimator.
    InnerLogWeights(&'a [f64]),
    /// Independent replicate values of `log p_hat`.
    Replicates(&'a [f64]),
}

/// Estimates `Var(log p_hat)`.
///
/// For inner weights the estimator is `log((1/N) sum u_j)`. Replicates pair only
/// with [`VarianceMethod::Replicate`]; inner weights only with the delta method or
/// jackknife.
pub fn var_log_estimate(sample: VarianceSample<'_>, method: VarianceMethod) -> Result<f64> {
    match (sample, method) {
        (VarianceSample::Replicates(xs), VarianceMethod::Replicate(_)) => {
            if xs.len() < 2 {
                return invalid("variance needs at least 2 samples");
            }
            if xs.iter().any(|x| !x.is_finite()) {
                return Ok(f64::INFINITY);
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            Ok(xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
        }
        (VarianceSample::InnerLogWeights(lu), VarianceMethod::Delta) => {
            if lu.len() < 2 {
                return invalid("variance needs at least 2 samples");
            }
            Ok(delta_var_log(lu))
        }
        (VarianceSample::InnerLogWeights(lu), VarianceMethod::Jackknife) => {
            if lu.len() < 2 {
                return invalid("variance needs at least 2 samples");
            }
            Ok(jackknife_var_log(lu))
        }
        (VarianceSample::Replicates(_), m) => invalid(format!("{m:?} needs inner weights, got replicates")),
        (VarianceSample::InnerLogWeights(_), m) => invalid(format!("{m:?} needs replicates, got inner weights")),
    }
}

fn delta_var_log(lu: &[f64]) -> f64 {
    let lse = log_sum_exp(lu);
    if lse == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let sq: Vec<f64> = lu.iter().map(|x| 2.0 * x).collect();
    let ratio = (log_sum_exp(&sq) - 2.0 * lse).exp();
    (ratio - 1.0 / lu.len() as f64).max(0.0)
}

fn jackknife_var_log(lu: &[f64]) -> f64 {
    let n = lu.len();
    let lse = log_sum_exp(lu);
    if lse == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let log_nm1 = ((n - 1) as f64).ln();
    // log of the mean of the remaining n-1 weights when u_j is dropped
    let pseudo: Vec<f64> = lu
        .iter()
        .map(|&l| lse + (-(l - lse).exp()).ln_1p() - log_nm1)
        .collect();
    if pseudo.iter().any(|p| !p.is_finite()) {
        return f64::INFINITY;
    }
    let mean = pseudo.iter().sum::<f64>() / n as f64;
    (n as f64 - 1.0) / n as f64 * pseudo.iter().map(|p| (p - mean).powi(2)).sum::<f64>()
}
