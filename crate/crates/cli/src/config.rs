//! Run configuration: a TOML file of optional keys, then command-line overrides.

use std::path::Path;

use aisel::{AnnealingSchedule, NPolicy, ResampleMethod, SamplerConfig, VarianceMethod};
use clap::Args;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub particles: usize,
    /// `linear:T`, `cubic:T` or `powerK:T`.
    pub ladder: String,
    /// Inner samples per likelihood estimate.
    pub n: usize,
    pub ess_fraction: f64,
    pub mh_reps: usize,
    pub initial_scale: Option<f64>,
    pub resample: String,
    /// `delta`, `jackknife` or `replicate:K`; records per-temperature gamma^2.
    pub variance: Option<String>,
    pub parallel: bool,
    pub batches: usize,
    pub parallel_batches: bool,
    /// GLMM cluster proposal: `prior` or `laplace`.
    pub glmm_proposal: String,
    /// Subtract the sample mean from SV returns.
    pub center_returns: bool,
    pub toy_obs_var: f64,
    pub toy_prior_mean: f64,
    pub toy_prior_var: f64,
    /// Variance of the synthetic log-likelihood noise on the toy model.
    pub toy_noise: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            particles: 1000,
            ladder: "linear:10".into(),
            n: 10,
            ess_fraction: 0.5,
            mh_reps: 5,
            initial_scale: None,
            resample: "systematic".into(),
            variance: None,
            parallel: true,
            batches: 20,
            parallel_batches: false,
            glmm_proposal: "prior".into(),
            center_returns: false,
            toy_obs_var: 1.0,
            toy_prior_mean: 0.0,
            toy_prior_var: 1.0,
            toy_noise: 0.0,
        }
    }
}

/// Flags that override configuration keys.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ensemble size M.
    #[arg(long)]
    pub particles: Option<usize>,
    /// Temperature ladder, e.g. `linear:10` or `cubic:15`.
    #[arg(long)]
    pub ladder: Option<String>,
    /// Inner samples N per likelihood estimate.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub ess_fraction: Option<f64>,
    #[arg(long)]
    pub mh_reps: Option<usize>,
    #[arg(long)]
    pub variance: Option<String>,
    /// Move particles on one thread.
    #[arg(long)]
    pub sequential: bool,
}

impl Config {
    pub fn load(o: &Overrides) -> Result<Self, CliError> {
        let mut c = match &o.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(v) = o.seed {
            c.seed = v;
        }
        if let Some(v) = o.particles {
            c.particles = v;
        }
        if let Some(v) = &o.ladder {
            c.ladder = v.clone();
        }
        if let Some(v) = o.n {
            c.n = v;
        }
        if let Some(v) = o.ess_fraction {
            c.ess_fraction = v;
        }
        if let Some(v) = o.mh_reps {
            c.mh_reps = v;
        }
        if let Some(v) = &o.variance {
            c.variance = Some(v.clone());
        }
        if o.sequential {
            c.parallel = false;
        }
        Ok(c)
    }

    fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn schedule(&self) -> Result<AnnealingSchedule, CliError> {
        Ok(AnnealingSchedule::parse(&self.ladder)?)
    }

    pub fn sampler(&self) -> Result<SamplerConfig, CliError> {
        let mut s = SamplerConfig::new(self.particles, self.schedule()?, self.n);
        s.ess_fraction = self.ess_fraction;
        s.mh_reps = self.mh_reps;
        s.initial_scale = self.initial_scale;
        s.n_policy = NPolicy::Fixed(self.n);
        s.resample = self.resample.parse::<ResampleMethod>().map_err(CliError::config)?;
        s.variance = self.variance.as_deref().map(str::parse::<VarianceMethod>).transpose().map_err(CliError::config)?;
        s.parallel = self.parallel;
        s.validate()?;
        Ok(s)
    }
}
