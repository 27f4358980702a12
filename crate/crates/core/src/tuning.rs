//! Choosing the likelihood-estimator precision: timing model, `gamma_bar^2`,
//! the optimal log-likelihood variance `sigma2_opt` and particle count `N_opt`.
//!
//! With `Var(log p_hat_N) ≈ gamma^2 / N` and cost `tau0 + N tau1` per estimate,
//! the sampler's cost for fixed precision is proportional to
//! `CT*(sigma^2) = exp(tau sigma^2) (gamma_bar^2 tau1 / sigma^2 + tau0)`.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;

use crate::error::{invalid, AiselError, Result};
use crate::likelihood::{EstimatorSettings, InitialDensity, Model};

/// Seconds per likelihood estimate: `tau0 + N tau1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    pub tau0: f64,
    pub tau1: f64,
}

impl TimingModel {
    pub fn new(tau0: f64, tau1: f64) -> Result<Self> {
        if !(tau0 >= 0.0 && tau1 > 0.0) {
            return invalid(format!("timing needs tau0 >= 0 and tau1 > 0, got ({tau0}, {tau1})"));
        }
        Ok(Self { tau0, tau1 })
    }

    pub fn seconds(&self, n: usize) -> f64 {
        self.tau0 + n as f64 * self.tau1
    }
}

/// Least-squares line through `(N, seconds)`. A negative intercept is clamped
/// to zero and the slope refit through the origin.
pub fn fit_timing(samples: &[(usize, f64)]) -> Result<TimingModel> {
    if samples.len() < 2 {
        return invalid("timing fit needs at least two samples");
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0 as f64).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 as f64 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("timing fit needs at least two distinct N values");
    }
    let sxy: f64 = samples.iter().map(|s| (s.0 as f64 - mx) * (s.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if intercept >= 0.0 {
        return TimingModel::new(intercept, slope);
    }
    let through_origin = samples.iter().map(|s| s.0 as f64 * s.1).sum::<f64>()
        / samples.iter().map(|s| (s.0 as f64).powi(2)).sum::<f64>();
    TimingModel::new(0.0, through_origin)
}

/// Minimizer of [`ct_star`]:
/// `[sqrt((g tau tau1)^2 + 4 g tau tau0 tau1) - g tau tau1] / (2 tau tau0)`, or
/// `1/tau` when `tau0 = 0`. Evaluated in the algebraically equal form
/// `2 g tau1 / [sqrt(...) + g tau tau1]`, which has no cancellation and is
/// continuous at `tau0 = 0`.
pub fn sigma2_opt(tau: f64, timing: &TimingModel, gamma_bar2: f64) -> Result<f64> {
    if !(tau > 0.0 && gamma_bar2 > 0.0) {
        return invalid("sigma2_opt needs tau > 0 and gamma_bar2 > 0");
    }
    if timing.tau0 == 0.0 {
        return Ok(1.0 / tau);
    }
    let b = gamma_bar2 * tau * timing.tau1;
    let c = gamma_bar2 * tau * timing.tau0 * timing.tau1;
    Ok(2.0 * gamma_bar2 * timing.tau1 / ((b * b + 4.0 * c).sqrt() + b))
}

/// `round(gamma_bar2 / sigma2_opt)`, at least one. Returns one when the
/// likelihood is exact (`gamma_bar2 = 0`).
pub fn n_opt(tau: f64, timing: &TimingModel, gamma_bar2: f64) -> Result<usize> {
    if gamma_bar2 == 0.0 {
        return Ok(1);
    }
    let s = sigma2_opt(tau, timing, gamma_bar2)?;
    Ok(((gamma_bar2 / s).round() as usize).max(1))
}

/// The closed form `2 tau tau0 / [sqrt((tau tau1)^2 + 4 tau tau0 tau1 / g) - g tau tau1]`
/// (`tau g` when `tau0 = 0`), evaluated exactly as written. Its `tau0 > 0` branch
/// does not reduce to `g / sigma2_opt`; it is reported only for comparison.
pub fn n_opt_display(tau: f64, timing: &TimingModel, gamma_bar2: f64) -> f64 {
    if timing.tau0 == 0.0 {
        return tau * gamma_bar2;
    }
    let (t0, t1) = (timing.tau0, timing.tau1);
    2.0 * tau * t0 / (((tau * t1).powi(2) + 4.0 * tau * t0 * t1 / gamma_bar2).sqrt() - gamma_bar2 * tau * t1)
}

/// `exp(tau sigma2) (gamma_bar2 tau1 / sigma2 + tau0)`.
pub fn ct_star(sigma2: f64, tau: f64, timing: &TimingModel, gamma_bar2: f64) -> f64 {
    (tau * sigma2).exp() * (gamma_bar2 * timing.tau1 / sigma2 + timing.tau0)
}

/// Time normalized variance: estimator variance times compute seconds.
pub fn tnv(variance: f64, seconds: f64) -> f64 {
    variance * seconds
}

/// `(N0 / J) sum_j Var_hat(log p_hat_{N0}(y | theta_j))` over `J` draws from
/// `pi0`, using the model's default variance diagnostic.
pub fn estimate_gamma_bar2<M: Model, P: InitialDensity, R: Rng + ?Sized>(
    model: &M,
    pi0: &P,
    j: usize,
    n0: usize,
    rng: &mut R,
) -> Result<f64> {
    if j < 1 || n0 < 2 {
        return invalid("gamma_bar2 needs J >= 1 and N0 >= 2");
    }
    let layout = model.layout();
    let settings = EstimatorSettings::new(n0).with_variance(model.default_variance_method());
    let mut total = 0.0;
    for _ in 0..j {
        let theta = draw_in_support(model, pi0, 10_000, rng)?;
        debug_assert!(layout.contains(&theta));
        let est = model.estimate(&theta, &settings, rng)?;
        total += est.gamma2.unwrap_or(f64::INFINITY);
    }
    Ok(total / j as f64)
}

fn draw_in_support<M: Model, P: InitialDensity, R: Rng + ?Sized>(model: &M, pi0: &P, tries: usize, rng: &mut R) -> Result<Vec<f64>> {
    for _ in 0..tries {
        let x = pi0.sample(rng);
        if model.layout().contains(&x) && model.log_prior(&x) > f64::NEG_INFINITY {
            return Ok(x);
        }
    }
    Err(AiselError::InitRetriesExhausted(tries))
}

/// Mean wall-clock seconds of one estimate at `theta` for each `N`.
pub fn measure_timing<M: Model, R: Rng + ?Sized>(
    model: &M,
    theta: &[f64],
    n_values: &[usize],
    reps: usize,
    rng: &mut R,
) -> Result<Vec<(usize, f64)>> {
    if reps < 1 {
        return invalid("timing needs at least one repetition");
    }
    n_values
        .iter()
        .map(|&n| {
            let settings = EstimatorSettings::new(n);
            let start = Instant::now();
            for _ in 0..reps {
                model.estimate(theta, &settings, rng)?;
            }
            Ok((n, start.elapsed().as_secs_f64() / reps as f64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningEstimates {
    pub timing: TimingModel,
    pub gamma_bar2: f64,
    pub tau: f64,
    pub sigma2_opt: f64,
    pub n_opt: usize,
    pub n_opt_display: f64,
}

impl TuningEstimates {
    pub fn compute(tau: f64, timing: TimingModel, gamma_bar2: f64) -> Result<Self> {
        Ok(Self {
            timing,
            gamma_bar2,
            tau,
            sigma2_opt: sigma2_opt(tau, &timing, gamma_bar2)?,
            n_opt: n_opt(tau, &timing, gamma_bar2)?,
            n_opt_display: n_opt_display(tau, &timing, gamma_bar2),
        })
    }

    /// `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tau0 = {}", self.timing.tau0);
        let _ = writeln!(s, "tau1 = {}", self.timing.tau1);
        let _ = writeln!(s, "gamma_bar2 = {}", self.gamma_bar2);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "sigma2_opt = {}", self.sigma2_opt);
        let _ = writeln!(s, "n_opt = {}", self.n_opt);
        let _ = writeln!(s, "n_opt_display = {}", self.n_opt_display);
        s
    }
}
