//! Independent replicate runs, between-batch variance, time normalized
//! variance and sweeps over the number of inner samples `N`.

use std::fmt::Write as _;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::likelihood::{InitialDensity, Model};
use crate::sampler::{aisel_run, NPolicy, RunReport, SamplerConfig};
use crate::tuning::tnv;

/// Per-batch seeds: a ChaCha8 generator keyed by `root`, one stream per batch.
pub fn batch_seeds(root: u64, batches: usize) -> Vec<u64> {
    (0..batches)
        .map(|b| {
            let mut r = ChaCha8Rng::seed_from_u64(root);
            r.set_stream(b as u64);
            r.next_u64()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub batches: usize,
    pub root_seed: u64,
    /// Run batches concurrently. Leave off when wall-clock times matter.
    pub parallel_batches: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub param_names: Vec<String>,
    pub seeds: Vec<u64>,
    /// Completed batches: index, posterior-mean estimates, log evidence, seconds.
    pub completed: Vec<(usize, Vec<f64>, f64, f64)>,
    pub failures: Vec<(usize, String)>,
    pub mean: Vec<f64>,
    /// `(1/R) sum_r (phi_r - mean)^2` per parameter; needs two completed batches.
    pub variance: Option<Vec<f64>>,
    pub log_ml_mean: f64,
    pub total_seconds: f64,
    /// Parameter-averaged variance times total seconds.
    pub tnv: Option<f64>,
}

impl BatchReport {
    fn from_runs(param_names: Vec<String>, seeds: Vec<u64>, runs: Vec<(usize, Result<RunReport>)>) -> Result<Self> {
        let mut completed = Vec::new();
        let mut failures = Vec::new();
        for (i, r) in runs {
            match r {
                Ok(rep) => completed.push((i, rep.posterior_mean, rep.log_ml, rep.seconds)),
                Err(e) => failures.push((i, e.to_string())),
            }
        }
        let d = param_names.len();
        let r = completed.len() as f64;
        let mean: Vec<f64> = (0..d).map(|k| completed.iter().map(|c| c.1[k]).sum::<f64>() / r).collect();
        let variance = (completed.len() >= 2).then(|| {
            (0..d).map(|k| completed.iter().map(|c| (c.1[k] - mean[k]).powi(2)).sum::<f64>() / r).collect::<Vec<f64>>()
        });
        let total_seconds = completed.iter().map(|c| c.3).sum();
        let tnv = variance.as_ref().map(|v| v.iter().map(|v| tnv(*v, total_seconds)).sum::<f64>() / d as f64);
        let log_ml_mean = completed.iter().map(|c| c.2).sum::<f64>() / r;
        Ok(Self { param_names, seeds, completed, failures, mean, variance, log_ml_mean, total_seconds, tnv })
    }

    pub fn mean_variance(&self) -> Option<f64> {
        self.variance.as_ref().map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `key = value` text. With `include_timing = false` the output depends only
    /// on the seeds, so two runs can be compared byte for byte.
    pub fn to_kv(&self, include_timing: bool) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "batches = {}", self.seeds.len());
        let _ = writeln!(s, "seeds = {}", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        let _ = writeln!(s, "params = {}", self.param_names.join(","));
        for (i, est, lml, secs) in &self.completed {
            let _ = writeln!(s, "batch.{i}.estimate = {}", join(est));
            let _ = writeln!(s, "batch.{i}.log_ml = {lml:?}");
            if include_timing {
                let _ = writeln!(s, "batch.{i}.seconds = {secs}");
            }
        }
        for (i, msg) in &self.failures {
            let _ = writeln!(s, "failure.{i} = {msg}");
        }
        let _ = writeln!(s, "mean = {}", join(&self.mean));
        if let Some(v) = &self.variance {
            let _ = writeln!(s, "variance = {}", join(v));
        }
        let _ = writeln!(s, "log_ml_mean = {:?}", self.log_ml_mean);
        if include_timing {
            let _ = writeln!(s, "total_seconds = {}", self.total_seconds);
            if let Some(t) = self.tnv {
                let _ = writeln!(s, "tnv = {t}");
            }
        }
        s
    }
}

/// `R` independent sampler runs. Failed batches are listed and excluded from
/// the pooled statistics; it is an error only if every batch fails.
pub fn run_batches<M: Model, P: InitialDensity>(
    model: &M,
    pi0: &P,
    config: &SamplerConfig,
    options: &BatchOptions,
) -> Result<BatchReport> {
    if options.batches < 1 {
        return invalid("need at least one batch");
    }
    config.validate()?;
    let seeds = batch_seeds(options.root_seed, options.batches);
    let one = |(i, seed): (usize, &u64)| {
        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
        (i, aisel_run(model, pi0, config, &mut rng).map(|o| o.report))
    };
    let runs: Vec<(usize, Result<RunReport>)> = if options.parallel_batches {
        seeds.par_iter().enumerate().map(one).collect()
    } else {
        seeds.iter().enumerate().map(one).collect()
    };
    if runs.iter().all(|r| r.1.is_err()) {
        return Err(runs.into_iter().next().unwrap().1.unwrap_err());
    }
    BatchReport::from_runs(model.layout().names().map(str::to_owned).collect(), seeds, runs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub tnv: f64,
    pub variance: f64,
    pub seconds: f64,
    pub failures: usize,
}

/// One batch report per `N`, all using the same batch seeds.
pub fn tnv_sweep<M: Model, P: InitialDensity>(
    model: &M,
    pi0: &P,
    config: &SamplerConfig,
    n_values: &[usize],
    options: &BatchOptions,
) -> Result<Vec<SweepRow>> {
    if n_values.is_empty() {
        return invalid("sweep needs at least one N");
    }
    if options.batches < 2 {
        return invalid("TNV needs at least two batches");
    }
    n_values
        .iter()
        .map(|&n| {
            let cfg = SamplerConfig { n_policy: NPolicy::Fixed(n), ..config.clone() };
            let rep = run_batches(model, pi0, &cfg, options)?;
            Ok(SweepRow {
                n,
                tnv: rep.tnv.unwrap_or(f64::NAN),
                variance: rep.mean_variance().unwrap_or(f64::NAN),
                seconds: rep.total_seconds,
                failures: rep.failures.len(),
            })
        })
        .collect()
}

/// Columns `n,tnv,var,seconds`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "n,tnv,var,seconds")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.n, r.tnv, r.variance, r.seconds)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy::GaussianToy;
    use crate::schedule::AnnealingSchedule;

    fn setup() -> (GaussianToy, SamplerConfig) {
        let toy = GaussianToy::new(vec![0.3, -0.2, 1.1], 1.0, 0.0, 1.0).unwrap();
        let cfg = SamplerConfig::new(100, AnnealingSchedule::linear(4).unwrap(), 1);
        (toy, cfg)
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let a = batch_seeds(42, 5);
        assert_eq!(a, batch_seeds(42, 5));
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 5);
        assert_eq!(batch_seeds(42, 3), a[..3]);
    }

    #[test]
    fn single_batch_has_no_variance() {
        let (toy, cfg) = setup();
        let pi0 = toy.prior_density();
        let opts = BatchOptions { batches: 1, root_seed: 1, parallel_batches: false };
        let rep = run_batches(&toy, &pi0, &cfg, &opts).unwrap();
        assert!(rep.variance.is_none() && rep.tnv.is_none());
        assert_eq!(rep.mean, rep.completed[0].1);
    }

    #[test]
    fn tnv_is_variance_times_seconds() {
        let (toy, cfg) = setup();
        let pi0 = toy.prior_density();
        let opts = BatchOptions { batches: 4, root_seed: 2, parallel_batches: true };
        let rep = run_batches(&toy, &pi0, &cfg, &opts).unwrap();
        let v = rep.variance.as_ref().unwrap()[0];
        assert!((rep.tnv.unwrap() - v * rep.total_seconds).abs() < 1e-12);
    }

    #[test]
    fn same_seeds_same_report() {
        let (toy, cfg) = setup();
        let pi0 = toy.prior_density();
        let a = run_batches(&toy, &pi0, &cfg, &BatchOptions { batches: 3, root_seed: 3, parallel_batches: true }).unwrap();
        let b = run_batches(&toy, &pi0, &cfg, &BatchOptions { batches: 3, root_seed: 3, parallel_batches: false }).unwrap();
        assert_eq!(a.to_kv(false), b.to_kv(false));
    }
}
