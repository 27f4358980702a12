//! Stochastic volatility models for daily returns, with and without leverage.
//!
//! Parameters are `(mu, phi, sigma_eta)` plus `rho` for the leverage variant.
//! Priors: `mu ~ N(0, 100)`, `phi ~ Be(15, 1.5)` on (0, 1),
//! `sigma_eta ~ IG(10, 0.1)` (shape, scale) and `rho ~ U(-1, 1)`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};

use super::dist::{beta_logpdf, inv_gamma_logpdf, normal_logpdf};
use crate::error::{invalid, Result};
use crate::likelihood::{replicate_estimate, EstimatorSettings, InitialDensity, LikelihoodEstimate, Model, VarianceMethod};
use crate::param::{Layout, Support};
use crate::particle_filter::{bootstrap_pf, SvParams};

pub const MU_PRIOR_VAR: f64 = 100.0;
pub const PHI_PRIOR: (f64, f64) = (15.0, 1.5);
pub const SIGMA_PRIOR: (f64, f64) = (10.0, 0.1);

#[derive(Debug, Clone)]
pub struct SvModel {
    pub y: Vec<f64>,
    pub leverage: bool,
    layout: Arc<Layout>,
}

impl SvModel {
    pub fn new(y: Vec<f64>, leverage: bool) -> Result<Self> {
        if y.is_empty() {
            return invalid("SV model needs at least one return");
        }
        let mut entries = vec![
            ("mu", Support::Real),
            ("phi", Support::Interval(0.0, 1.0)),
            ("sigma_eta", Support::Positive),
        ];
        if leverage {
            entries.push(("rho", Support::Interval(-1.0, 1.0)));
        }
        Ok(Self { y, leverage, layout: Layout::new(entries) })
    }

    /// Interprets a constrained parameter vector.
    pub fn params(&self, theta: &[f64]) -> SvParams {
        SvParams { mu: theta[0], phi: theta[1], sigma_eta: theta[2], rho: self.leverage.then(|| theta[3]) }
    }

    /// The prior, used as the default initial density.
    pub fn prior_density(&self) -> SvPrior {
        SvPrior { leverage: self.leverage }
    }
}

fn sv_log_prior(theta: &[f64], leverage: bool) -> f64 {
    let mut lp = normal_logpdf(theta[0], 0.0, MU_PRIOR_VAR)
        + beta_logpdf(theta[1], PHI_PRIOR.0, PHI_PRIOR.1)
        + inv_gamma_logpdf(theta[2], SIGMA_PRIOR.0, SIGMA_PRIOR.1);
    if leverage {
        lp += if theta[3].abs() < 1.0 { -(2f64.ln()) } else { f64::NEG_INFINITY };
    }
    lp
}

impl Model for SvModel {
    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        sv_log_prior(theta, self.leverage)
    }

    /// One bootstrap filter run; with [`VarianceMethod::Replicate`] the filter
    /// is rerun and the first run is the estimate.
    fn estimate<R: Rng + ?Sized>(&self, theta: &[f64], settings: &EstimatorSettings, rng: &mut R) -> Result<LikelihoodEstimate> {
        let p = self.params(theta);
        p.validate()?;
        let n = settings.n_particles;
        let single = |rng: &mut R| bootstrap_pf(&p, &self.y, n, rng).map(|r| r.log_lhat);
        match settings.variance {
            None => Ok(LikelihoodEstimate::new(single(rng)?, n)),
            Some(VarianceMethod::Replicate(k)) => replicate_estimate(k, n, || single(rng)),
            Some(m) => invalid(format!("{m:?} variance needs inner importance weights; use replicates for the particle filter")),
        }
    }

    fn default_variance_method(&self) -> VarianceMethod {
        VarianceMethod::Replicate(20)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SvPrior {
    pub leverage: bool,
}

impl InitialDensity for SvPrior {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mu = Normal::new(0.0, MU_PRIOR_VAR.sqrt()).unwrap().sample(rng);
        let phi = Beta::new(PHI_PRIOR.0, PHI_PRIOR.1).unwrap().sample(rng);
        let g = Gamma::new(SIGMA_PRIOR.0, 1.0 / SIGMA_PRIOR.1).unwrap().sample(rng);
        let mut out = vec![mu, phi, 1.0 / g];
        if self.leverage {
            out.push(rng.random_range(-1.0..1.0));
        }
        out
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        sv_log_prior(theta, self.leverage)
    }
}
