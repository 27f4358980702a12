//! The annealed importance sampler with estimated likelihood: reweight,
//! conditionally resample and move with pseudo-marginal random-walk
//! Metropolis-Hastings, one temperature at a time.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::ensemble::{resample, Ensemble, Particle};
use crate::error::{invalid, AiselError, Result};
use crate::likelihood::{EstimatorSettings, InitialDensity, LikelihoodEstimate, Model, VarianceMethod};
use crate::marglik::{f_hat, EvidenceTrace};
use crate::param::ParamVector;
use crate::resample::ResampleMethod;
use crate::schedule::AnnealingSchedule;

/// How many inner samples the likelihood estimator uses at each `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NPolicy {
    /// The same `N` everywhere.
    Fixed(usize),
    /// A pilot estimate with `pilot_n` samples measures `gamma^2(theta)`; the
    /// estimate itself then uses `ceil(gamma^2 / sigma2_target)` samples, capped
    /// at `max_n`. The pilot costs one extra estimator call per point.
    Adaptive { sigma2_target: f64, pilot_n: usize, max_n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Ensemble size `M`.
    pub particles: usize,
    pub schedule: AnnealingSchedule,
    /// Resample when ESS falls strictly below `ess_fraction * M`.
    pub ess_fraction: f64,
    /// Metropolis-Hastings repetitions per particle and temperature.
    pub mh_reps: usize,
    /// Starting random-walk scale; `None` means `2.38^2 / d`.
    pub initial_scale: Option<f64>,
    pub n_policy: NPolicy,
    pub resample: ResampleMethod,
    /// Variance diagnostic attached to every fresh estimate; `None` skips it.
    pub variance: Option<VarianceMethod>,
    /// Move particles on the rayon pool. Output does not depend on this flag.
    pub parallel: bool,
    pub max_init_retries: usize,
}

impl SamplerConfig {
    pub fn new(particles: usize, schedule: AnnealingSchedule, n: usize) -> Self {
        Self {
            particles,
            schedule,
            ess_fraction: 0.5,
            mh_reps: 5,
            initial_scale: None,
            n_policy: NPolicy::Fixed(n),
            resample: ResampleMethod::Systematic,
            variance: None,
            parallel: true,
            max_init_retries: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 1 {
            return invalid("ensemble size must be positive");
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction < 1.0) {
            return invalid(format!("ESS fraction {} outside (0, 1)", self.ess_fraction));
        }
        if self.mh_reps < 1 {
            return invalid("need at least one Metropolis-Hastings repetition");
        }
        if let Some(s) = self.initial_scale {
            if !(s > 0.0 && s.is_finite()) {
                return invalid("initial scale must be positive");
            }
        }
        if self.max_init_retries < 1 {
            return invalid("need at least one initial draw attempt");
        }
        match self.n_policy {
            NPolicy::Fixed(n) => EstimatorSettings::new(n).validate(),
            NPolicy::Adaptive { sigma2_target, pilot_n, max_n } => {
                if !(sigma2_target > 0.0) || pilot_n < 2 || max_n < 1 {
                    return invalid("adaptive N needs a positive target, pilot N >= 2 and max N >= 1");
                }
                Ok(())
            }
        }
    }
}

/// Random-walk proposal state on the unconstrained scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveState {
    pub scale: f64,
    pub covariance: DMatrix<f64>,
    pub last_acceptance_rate: f64,
    factor: DMatrix<f64>,
}

impl MoveState {
    pub fn new(dim: usize, scale: f64) -> Self {
        Self {
            scale,
            covariance: DMatrix::identity(dim, dim),
            last_acceptance_rate: f64::NAN,
            factor: DMatrix::identity(dim, dim) * scale.sqrt(),
        }
    }

    /// Sets the ensemble covariance and refreshes the Cholesky factor of
    /// `scale * covariance`, adding diagonal jitter if it is singular.
    pub fn set_covariance(&mut self, covariance: DMatrix<f64>) {
        self.covariance = covariance;
        self.refresh_factor();
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    fn refresh_factor(&mut self) {
        let d = self.covariance.nrows();
        let sym = (&self.covariance + self.covariance.transpose()) * 0.5 * self.scale;
        let mean_diag = (0..d).map(|i| sym[(i, i)].abs()).sum::<f64>() / d.max(1) as f64;
        let mut jitter = 0.0;
        let base = if mean_diag > 0.0 { mean_diag * 1e-10 } else { 1e-12 };
        for _ in 0..12 {
            let m = &sym + DMatrix::identity(d, d) * jitter;
            if let Some(ch) = m.cholesky() {
                self.factor = ch.l();
                return;
            }
            jitter = if jitter == 0.0 { base } else { jitter * 10.0 };
        }
        self.factor = DMatrix::from_diagonal(&DVector::from_fn(d, |i, _| sym[(i, i)].max(base).sqrt()));
    }
}

/// Scale multiplier for an observed acceptance rate.
pub fn mult_factor(acceptance_rate: f64) -> f64 {
    match acceptance_rate {
        r if r < 0.01 => 0.2,
        r if r < 0.1 => 0.5,
        r if r < 0.15 => 0.7,
        r if r < 0.2 => 0.9,
        r if r < 0.23 => 0.99,
        r if r < 0.25 => 1.0,
        r if r < 0.5 => 1.0 / 0.97,
        r if r < 0.85 => 1.0 / 0.8,
        r if r < 0.99 => 1.0 / 0.7,
        _ => 1.0 / 0.5,
    }
}

/// Multiplies the scale by [`mult_factor`] and refreshes the proposal factor.
pub fn adapt_scale(state: &mut MoveState, acceptance_rate: f64) {
    state.scale *= mult_factor(acceptance_rate);
    state.last_acceptance_rate = acceptance_rate;
    state.refresh_factor();
}

/// Weighted mean and covariance of the unconstrained parameters.
pub fn weighted_covariance(ensemble: &Ensemble) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let w = ensemble.weights()?;
    let d = ensemble.particles.first().map_or(0, |p| p.theta.dim());
    let mut mean = DVector::zeros(d);
    for (p, wi) in ensemble.particles.iter().zip(&w) {
        mean += DVector::from_column_slice(p.theta.unconstrained()) * *wi;
    }
    let mut cov = DMatrix::zeros(d, d);
    for (p, wi) in ensemble.particles.iter().zip(&w) {
        let dev = DVector::from_column_slice(p.theta.unconstrained()) - &mean;
        cov += &dev * dev.transpose() * *wi;
    }
    Ok((mean, cov))
}

/// Counts estimator invocations.
#[derive(Debug, Default)]
pub struct CallCounter(AtomicU64);

impl CallCounter {
    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

fn fresh_estimate<M: Model, R: Rng + ?Sized>(
    model: &M,
    theta: &[f64],
    policy: NPolicy,
    variance: Option<VarianceMethod>,
    calls: &CallCounter,
    rng: &mut R,
) -> Result<LikelihoodEstimate> {
    let n = match policy {
        NPolicy::Fixed(n) => n,
        NPolicy::Adaptive { sigma2_target, pilot_n, max_n } => {
            let pilot_settings = EstimatorSettings::new(pilot_n).with_variance(model.default_variance_method());
            calls.bump();
            let pilot = model.estimate(theta, &pilot_settings, rng)?;
            match pilot.gamma2 {
                Some(g) if g.is_finite() => ((g / sigma2_target).ceil() as usize).clamp(1, max_n),
                _ => max_n,
            }
        }
    };
    let settings = EstimatorSettings { n_particles: n, variance };
    calls.bump();
    model.estimate(theta, &settings, rng)
}

/// Independent per-particle stream: bit-reproducible for any worker partition.
pub fn particle_rng(sweep_seed: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(sweep_seed);
    r.set_stream(index as u64);
    r
}

fn for_each_particle<T, F>(particles: &mut [Particle], parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut Particle) -> Result<T> + Sync + Send,
{
    if parallel {
        particles.par_iter_mut().enumerate().map(|(i, p)| f(i, p)).collect()
    } else {
        particles.iter_mut().enumerate().map(|(i, p)| f(i, p)).collect()
    }
}

/// Draws `M` particles from `pi0` (redrawing out-of-support points) and attaches
/// one fresh likelihood estimate to each. Weights are uniform.
pub fn init_ensemble<M: Model, P: InitialDensity, R: Rng + ?Sized>(
    model: &M,
    pi0: &P,
    config: &SamplerConfig,
    calls: &CallCounter,
    rng: &mut R,
) -> Result<Ensemble> {
    config.validate()?;
    let seed = rng.next_u64();
    let layout = model.layout().clone();
    let mut particles: Vec<Particle> = (0..config.particles)
        .map(|_| Particle { theta: ParamVector::from_unconstrained(vec![0.0; layout.dim()], layout.clone()).unwrap(), log_lhat: None, log_weight: 0.0 })
        .collect();
    for_each_particle(&mut particles, config.parallel, |i, p| {
        let mut prng = particle_rng(seed, i);
        let mut draw = None;
        for _ in 0..config.max_init_retries {
            let x = pi0.sample(&mut prng);
            if x.len() == layout.dim() && layout.contains(&x) && model.log_prior(&x) > f64::NEG_INFINITY && pi0.log_density(&x) > f64::NEG_INFINITY {
                draw = Some(x);
                break;
            }
        }
        let x = draw.ok_or(AiselError::InitRetriesExhausted(config.max_init_retries))?;
        let est = fresh_estimate(model, &x, config.n_policy, config.variance, calls, &mut prng)?;
        p.theta = ParamVector::from_constrained(&x, layout.clone())?;
        p.log_lhat = Some(est.log_value);
        Ok(())
    })?;
    Ok(Ensemble::uniform(particles))
}

/// Multiplies each weight by `[p(theta) p_hat / pi0(theta)]^(a_curr - a_prev)`
/// using the stored estimate, then renormalizes. Never calls the estimator.
///
/// Returns the log of the weighted mean increment.
pub fn reweight<M: Model, P: InitialDensity>(
    ensemble: &mut Ensemble,
    model: &M,
    pi0: &P,
    a_prev: f64,
    a_curr: f64,
) -> Result<f64> {
    if !(a_curr > a_prev) {
        return invalid(format!("temperature must increase ({a_prev} -> {a_curr})"));
    }
    let delta = a_curr - a_prev;
    for p in &mut ensemble.particles {
        let ll = p.stored_log_lhat()?;
        let theta = p.theta.constrained();
        let inc = model.log_prior(&theta) + ll - pi0.log_density(&theta);
        p.log_weight += if inc == f64::NEG_INFINITY { f64::NEG_INFINITY } else { delta * inc };
    }
    ensemble.normalize()
}

/// Resamples iff ESS is strictly below `ess_fraction * M`.
pub fn maybe_resample<R: Rng + ?Sized>(
    ensemble: Ensemble,
    ess_fraction: f64,
    method: ResampleMethod,
    rng: &mut R,
) -> Result<(Ensemble, bool)> {
    let ess = ensemble.ess()?;
    if ess < ess_fraction * ensemble.len() as f64 {
        Ok((resample(&ensemble, method, rng)?, true))
    } else {
        Ok((ensemble, false))
    }
}

/// `log[pi0(theta)^(1-a) (p(theta) p_hat)^a]` plus the log-Jacobian of the
/// unconstrained parametrization. At `a = 0` the estimate is not consulted.
pub fn tempered_log_density<M: Model, P: InitialDensity>(
    model: &M,
    pi0: &P,
    theta: &ParamVector,
    log_lhat: Option<f64>,
    a: f64,
) -> Result<f64> {
    let x = theta.constrained();
    let mut v = theta.log_jacobian();
    if a < 1.0 {
        v += (1.0 - a) * pi0.log_density(&x);
    }
    if a > 0.0 {
        let ll = log_lhat.ok_or_else(|| AiselError::ContractViolation("tempered density needs a likelihood estimate".into()))?;
        v += a * (model.log_prior(&x) + ll);
    }
    Ok(v)
}

/// Tallies from moving one particle.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MoveStats {
    pub proposals: u64,
    pub accepted: u64,
    /// Proposals inside the prior support, each costing exactly one estimate
    /// under a fixed `N` policy.
    pub evaluated: u64,
    pub gamma2_sum: f64,
    pub gamma2_count: u64,
}

impl MoveStats {
    fn add(&mut self, o: &MoveStats) {
        self.proposals += o.proposals;
        self.accepted += o.accepted;
        self.evaluated += o.evaluated;
        self.gamma2_sum += o.gamma2_sum;
        self.gamma2_count += o.gamma2_count;
    }
}

/// `mh_reps` pseudo-marginal random-walk steps targeting the tempered density
/// at `a`. Proposals get a fresh estimate; a rejected proposal leaves the
/// particle and its stored estimate untouched.
#[allow(clippy::too_many_arguments)]
pub fn mh_move<M: Model, P: InitialDensity, R: Rng + ?Sized>(
    particle: &mut Particle,
    a: f64,
    state: &MoveState,
    model: &M,
    pi0: &P,
    config: &SamplerConfig,
    calls: &CallCounter,
    rng: &mut R,
) -> Result<MoveStats> {
    let layout = particle.theta.layout().clone();
    let d = layout.dim();
    let mut stats = MoveStats::default();
    let mut current = tempered_log_density(model, pi0, &particle.theta, particle.log_lhat, a)?;
    for _ in 0..config.mh_reps {
        stats.proposals += 1;
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let step = state.factor() * z;
        let u: Vec<f64> = particle.theta.unconstrained().iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let prop = ParamVector::from_unconstrained(u, layout.clone())?;
        let x = prop.constrained();
        let log_u: f64 = rng.random::<f64>().ln();
        if !(layout.contains(&x) && model.log_prior(&x) > f64::NEG_INFINITY) {
            continue;
        }
        let log_lhat = if a > 0.0 {
            stats.evaluated += 1;
            let est = fresh_estimate(model, &x, config.n_policy, config.variance, calls, rng)?;
            if let Some(g) = est.gamma2 {
                if g.is_finite() {
                    stats.gamma2_sum += g;
                    stats.gamma2_count += 1;
                }
            }
            Some(est.log_value)
        } else {
            None
        };
        let proposed = tempered_log_density(model, pi0, &prop, log_lhat, a)?;
        let log_ratio = proposed - current;
        if !log_ratio.is_nan() && log_u < log_ratio {
            particle.theta = prop;
            particle.log_lhat = log_lhat;
            current = proposed;
            stats.accepted += 1;
        }
    }
    Ok(stats)
}

/// Diagnostics for one temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureRecord {
    pub t: usize,
    pub a_t: f64,
    pub ess_before: f64,
    pub ess_after: f64,
    pub resampled: bool,
    pub acceptance_rate: f64,
    /// Random-walk scale used for this temperature's moves.
    pub scale: f64,
    pub f_hat: f64,
    /// Weighted mean and variance of the stored `log_lhat` after the moves.
    pub mean_log_lhat: f64,
    pub var_log_lhat: f64,
    /// Mean of `N * Var(log p_hat)` over this temperature's fresh estimates,
    /// when a variance method is configured.
    pub mean_gamma2: Option<f64>,
    pub estimator_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTrace {
    pub records: Vec<TemperatureRecord>,
}

impl SweepTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,a_t,ess_before,ess_after,resampled,acceptance_rate,scale,f_hat,mean_log_lhat,var_log_lhat,mean_gamma2,estimator_calls")?;
        for r in &self.records {
            let g = r.mean_gamma2.map_or(String::new(), |g| g.to_string());
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t, r.a_t, r.ess_before, r.ess_after, r.resampled as u8, r.acceptance_rate, r.scale, r.f_hat,
                r.mean_log_lhat, r.var_log_lhat, g, r.estimator_calls
            )?;
        }
        Ok(())
    }

    /// Path average of the per-temperature `mean_gamma2` values.
    pub fn gamma_bar2(&self) -> Option<f64> {
        let vals: Vec<f64> = self.records.iter().filter_map(|r| r.mean_gamma2).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub param_names: Vec<String>,
    /// Weighted posterior means and standard deviations on the constrained scale.
    pub posterior_mean: Vec<f64>,
    pub posterior_sd: Vec<f64>,
    pub log_ml: f64,
    pub evidence: EvidenceTrace,
    pub estimator_calls: u64,
    pub proposals: u64,
    pub proposals_evaluated: u64,
    pub resample_count: usize,
    pub final_ess: f64,
    pub seconds: f64,
    pub gamma_bar2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub ensemble: Ensemble,
    pub trace: SweepTrace,
    pub report: RunReport,
}

/// Weighted mean of `f` applied to constrained parameters.
pub fn posterior_expectation(ensemble: &Ensemble, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    ensemble.weighted_mean(|p| f(&p.theta.constrained()))
}

fn weighted_log_lhat_moments(ensemble: &Ensemble) -> Result<(f64, f64)> {
    let mean = ensemble.weighted_mean(|p| p.log_lhat.unwrap_or(f64::NAN))?;
    let var = ensemble.weighted_mean(|p| (p.log_lhat.unwrap_or(f64::NAN) - mean).powi(2))?;
    Ok((mean, var))
}

/// Runs the full sweep from `a_0 = 0` to `a_T = 1`.
pub fn aisel_run<M: Model, P: InitialDensity, R: Rng + ?Sized>(
    model: &M,
    pi0: &P,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<RunOutput> {
    config.validate()?;
    if config.particles < 2 {
        return invalid("the sampler needs at least two particles");
    }
    let start = Instant::now();
    let calls = CallCounter::default();
    let d = model.dim();
    let schedule = config.schedule.points();
    let mut ensemble = init_ensemble(model, pi0, config, &calls, rng)?;
    let mut f_values = vec![f_hat(&ensemble, model, pi0)?];
    let mut state = MoveState::new(d, config.initial_scale.unwrap_or(2.38 * 2.38 / d as f64));
    let mut trace = SweepTrace::default();
    let mut totals = MoveStats::default();
    let last = schedule.len() - 1;

    for t in 1..=last {
        let (a_prev, a) = (schedule[t - 1], schedule[t]);
        let calls_before = calls.get();
        reweight(&mut ensemble, model, pi0, a_prev, a).map_err(|e| match e {
            AiselError::TotalDegeneracy(_) => AiselError::DegenerateTemperature { t, a_t: a },
            other => other,
        })?;
        let ess_before = ensemble.ess()?;
        f_values.push(f_hat(&ensemble, model, pi0)?);
        let resampled;
        if t < last {
            let (e, r) = maybe_resample(ensemble, config.ess_fraction, config.resample, rng)?;
            ensemble = e;
            resampled = r;
        } else {
            resampled = false;
        }
        let ess_after = ensemble.ess()?;

        state.set_covariance(weighted_covariance(&ensemble)?.1);
        let scale = state.scale;
        let seed = rng.next_u64();
        let per_particle = for_each_particle(&mut ensemble.particles, config.parallel, |i, p| {
            let mut prng = particle_rng(seed, i);
            mh_move(p, a, &state, model, pi0, config, &calls, &mut prng)
        })?;
        let mut sweep = MoveStats::default();
        per_particle.iter().for_each(|s| sweep.add(s));
        totals.add(&sweep);
        let rate = sweep.accepted as f64 / sweep.proposals.max(1) as f64;
        adapt_scale(&mut state, rate);

        let (mean_ll, var_ll) = weighted_log_lhat_moments(&ensemble)?;
        trace.records.push(TemperatureRecord {
            t,
            a_t: a,
            ess_before,
            ess_after,
            resampled,
            acceptance_rate: rate,
            scale,
            f_hat: *f_values.last().unwrap(),
            mean_log_lhat: mean_ll,
            var_log_lhat: var_ll,
            mean_gamma2: (sweep.gamma2_count > 0).then(|| sweep.gamma2_sum / sweep.gamma2_count as f64),
            estimator_calls: calls.get() - calls_before,
        });
    }

    let evidence = EvidenceTrace::new(schedule.to_vec(), f_values)?;
    let mut posterior_mean = Vec::with_capacity(d);
    let mut posterior_sd = Vec::with_capacity(d);
    for k in 0..d {
        let m = posterior_expectation(&ensemble, |x| x[k])?;
        let v = posterior_expectation(&ensemble, |x| (x[k] - m).powi(2))?;
        posterior_mean.push(m);
        posterior_sd.push(v.sqrt());
    }
    let report = RunReport {
        param_names: model.layout().names().map(str::to_owned).collect(),
        posterior_mean,
        posterior_sd,
        log_ml: evidence.log_ml,
        evidence,
        estimator_calls: calls.get(),
        proposals: totals.proposals,
        proposals_evaluated: totals.evaluated,
        resample_count: ensemble.resample_count,
        final_ess: ensemble.ess()?,
        seconds: start.elapsed().as_secs_f64(),
        gamma_bar2: trace.gamma_bar2(),
    };
    Ok(RunOutput { ensemble, trace, report })
}
