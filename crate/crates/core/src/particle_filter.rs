//! Bootstrap particle filter for scalar-state state-space models.

use std::io::BufRead;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, AiselError, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// A state-space model with parameters already fixed.
pub trait StateSpaceModel: Sync {
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;

    /// Draws `h_{t+1}` given `h_t` and the observation `y_t` at the same time.
    fn transition<R: Rng + ?Sized>(&self, h: f64, y: f64, rng: &mut R) -> f64;

    fn measurement_logdensity(&self, h: f64, y: f64) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfResult {
    pub log_lhat: f64,
    pub per_step_log_means: Vec<f64>,
    pub degenerate: bool,
}

/// Runs the filter with `n_particles` draws from the initial law.
///
/// Multinomial resampling follows every step but the last. If every
/// measurement density underflows at some step the result is flagged
/// degenerate with `log_lhat = -inf`.
pub fn bootstrap_pf<S: StateSpaceModel, R: Rng + ?Sized>(
    model: &S,
    y: &[f64],
    n_particles: usize,
    rng: &mut R,
) -> Result<PfResult> {
    if n_particles < 2 {
        return invalid("particle filter needs at least 2 particles");
    }
    let initial = (0..n_particles).map(|_| model.sample_initial(rng)).collect();
    bootstrap_pf_from(model, y, initial, rng)
}

/// As [`bootstrap_pf`], starting from the given draws of `h_1`.
pub fn bootstrap_pf_from<S: StateSpaceModel, R: Rng + ?Sized>(
    model: &S,
    y: &[f64],
    mut states: Vec<f64>,
    rng: &mut R,
) -> Result<PfResult> {
    if y.is_empty() {
        return invalid("particle filter needs at least one observation");
    }
    if states.is_empty() {
        return invalid("particle filter needs at least one particle");
    }
    let n = states.len();
    let log_n = (n as f64).ln();
    let mut log_w = vec![0.0; n];
    let mut cdf = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut per_step = Vec::with_capacity(y.len());
    for (t, &yt) in y.iter().enumerate() {
        if t > 0 {
            let y_prev = y[t - 1];
            for h in states.iter_mut() {
                *h = model.transition(*h, y_prev, rng);
            }
        }
        for (lw, h) in log_w.iter_mut().zip(&states) {
            *lw = model.measurement_logdensity(*h, yt);
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > f64::NEG_INFINITY) || max == f64::INFINITY {
            per_step.push(f64::NEG_INFINITY);
            return Ok(PfResult { log_lhat: f64::NEG_INFINITY, per_step_log_means: per_step, degenerate: true });
        }
        // Cumulative weights relative to the largest; `cum` ends as their sum.
        let mut cum = 0.0;
        for (c, lw) in cdf.iter_mut().zip(&log_w) {
            cum += (lw - max).exp();
            *c = cum;
        }
        if cum.is_nan() {
            return invalid(format!("measurement density is NaN at step {}", t + 1));
        }
        per_step.push(max + cum.ln() - log_n);
        if t + 1 < y.len() {
            // Multinomial draws by inverting the cumulative weights.
            for s in scratch.iter_mut() {
                let u = rng.random::<f64>() * cum;
                let i = cdf.partition_point(|c| *c <= u).min(n - 1);
                *s = states[i];
            }
            std::mem::swap(&mut states, &mut scratch);
        }
    }
    Ok(PfResult { log_lhat: per_step.iter().sum(), per_step_log_means: per_step, degenerate: false })
}

/// Stochastic volatility parameters. `rho = None` is the model without leverage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma_eta: f64,
    pub rho: Option<f64>,
}

impl SvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return invalid(format!("phi = {} outside (0, 1)", self.phi));
        }
        if !(self.sigma_eta > 0.0) || !self.mu.is_finite() {
            return invalid("sigma_eta must be positive and mu finite");
        }
        if let Some(rho) = self.rho {
            if !(rho.abs() < 1.0) {
                return invalid(format!("leverage correlation {rho} outside (-1, 1)"));
            }
        }
        Ok(())
    }

    /// Mean and variance of the stationary state distribution, used for `h_1`.
    pub fn stationary(&self) -> (f64, f64) {
        (self.mu, self.sigma_eta * self.sigma_eta / (1.0 - self.phi * self.phi))
    }
}

/// `mu (1 - phi) + phi h + sigma_eta * eta` with `eta` standard normal.
pub fn sv_transition<R: Rng + ?Sized>(h: f64, theta: &SvParams, rng: &mut R) -> f64 {
    let eta: f64 = StandardNormal.sample(rng);
    theta.mu * (1.0 - theta.phi) + theta.phi * h + theta.sigma_eta * eta
}

/// Transition conditioned on the realized measurement shock `eps = y e^{-h/2}`:
/// the state innovation is `rho eps + sqrt(1 - rho^2) xi`.
pub fn svl_transition<R: Rng + ?Sized>(h: f64, y: f64, theta: &SvParams, rng: &mut R) -> Result<f64> {
    let rho = theta.rho.unwrap_or(0.0);
    if !(rho.abs() < 1.0) {
        return Err(AiselError::InvalidArgument(format!("leverage correlation {rho} outside (-1, 1)")));
    }
    Ok(svl_step(h, y, rho, theta, rng))
}

fn svl_step<R: Rng + ?Sized>(h: f64, y: f64, rho: f64, theta: &SvParams, rng: &mut R) -> f64 {
    let xi: f64 = StandardNormal.sample(rng);
    let eps = y * (-0.5 * h).exp();
    theta.mu * (1.0 - theta.phi) + theta.phi * h + theta.sigma_eta * (rho * eps + (1.0 - rho * rho).sqrt() * xi)
}

/// `log N(y; 0, e^h)`.
pub fn sv_measurement_logdensity(h: f64, y: f64) -> f64 {
    -HALF_LN_2PI - 0.5 * h - 0.5 * y * y * (-h).exp()
}

impl StateSpaceModel for SvParams {
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (m1, v1) = self.stationary();
        let z: f64 = StandardNormal.sample(rng);
        m1 + v1.sqrt() * z
    }

    fn transition<R: Rng + ?Sized>(&self, h: f64, y: f64, rng: &mut R) -> f64 {
        match self.rho {
            None => sv_transition(h, self, rng),
            Some(rho) => svl_step(h, y, rho, self, rng),
        }
    }

    fn measurement_logdensity(&self, h: f64, y: f64) -> f64 {
        sv_measurement_logdensity(h, y)
    }
}

/// Reads one return per line, skipping blank lines and `#` comments; with
/// `center` the sample mean is subtracted.
pub fn read_returns<R: BufRead>(reader: R, center: bool) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let v: f64 = s.parse().map_err(|_| AiselError::Parse(format!("line {}: bad number `{s}`", i + 1)))?;
        if !v.is_finite() {
            return Err(AiselError::Parse(format!("line {}: non-finite return", i + 1)));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(AiselError::Parse("no returns found".into()));
    }
    if center {
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        out.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(out)
}

/// Simulates `n` returns (and the latent log-volatilities) from the model.
pub fn simulate_sv<R: Rng + ?Sized>(theta: &SvParams, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    theta.validate()?;
    let rho = theta.rho.unwrap_or(0.0);
    let mut h = theta.sample_initial(rng);
    let mut ys = Vec::with_capacity(n);
    let mut hs = Vec::with_capacity(n);
    for _ in 0..n {
        let eps: f64 = StandardNormal.sample(rng);
        let xi: f64 = StandardNormal.sample(rng);
        let y = (0.5 * h).exp() * eps;
        hs.push(h);
        ys.push(y);
        h = theta.mu * (1.0 - theta.phi) + theta.phi * h + theta.sigma_eta * (rho * eps + (1.0 - rho * rho).sqrt() * xi);
    }
    Ok((ys, hs))
}
