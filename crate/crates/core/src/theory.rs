//! Checks of the ESS-degradation result under perfect mixing, plus the
//! closed-form importance-sampling variance estimator.
//!
//! Perfect mixing: at every temperature the move kernel draws exactly from the
//! current interpolation density. On the conjugate normal toy (with the prior as
//! initial density) those densities are normal, so the idealized sampler can be
//! run directly. Noise on the log-likelihood then lowers the ESS by the factor
//! `exp(-tau sigma^2)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::error::{invalid, AiselError, Result};
use crate::models::toy::GaussianToy;
use crate::schedule::AnnealingSchedule;
use crate::weights::ess_from_log_weights;

/// Which law the per-temperature noise `z_t` is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZLaw {
    /// The `z` marginal of the extended interpolation density at `a_{t-1}`:
    /// `N(sigma^2 (a_{t-1} - 1/2), sigma^2)`. This is an exact draw from the
    /// extended target, and keeps `E[w_tilde] = E[w]`.
    #[default]
    Tempered,
    /// The estimator's own law `N(-sigma^2/2, sigma^2)` at every temperature.
    Untempered,
}

/// Log-likelihood noise with `Var(z) = sigma2`, constant in `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma2: f64,
    pub law: ZLaw,
}

impl NoiseSpec {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return invalid(format!("noise variance {sigma2} must be nonnegative"));
        }
        Ok(Self { sigma2, law: ZLaw::Tempered })
    }

    pub fn with_law(mut self, law: ZLaw) -> Self {
        self.law = law;
        self
    }
}

/// Log weights with exact (`log_w`) and noisy (`log_w_tilde`) likelihoods on
/// shared parameter trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfectMixingResult {
    pub log_w: Vec<f64>,
    pub log_w_tilde: Vec<f64>,
    pub ess_ais: f64,
    pub ess_aisel: f64,
}

impl PerfectMixingResult {
    pub fn ess_ratio(&self) -> f64 {
        self.ess_aisel / self.ess_ais
    }
}

const CHUNK: usize = 4096;

/// Runs `m` idealized trajectories without resampling on the toy, whose prior
/// serves as initial density.
pub fn perfect_mixing_ais<R: Rng + ?Sized>(
    toy: &GaussianToy,
    schedule: &AnnealingSchedule,
    m: usize,
    noise: NoiseSpec,
    rng: &mut R,
) -> Result<PerfectMixingResult> {
    if m < 1 {
        return invalid("need at least one trajectory");
    }
    let pts = schedule.points();
    // Normal draws for each a_{t-1}.
    let laws: Vec<(f64, f64)> = pts[..pts.len() - 1].iter().map(|&a| toy.tempered(a)).collect();
    let sd = noise.sigma2.sqrt();
    let seed = rng.next_u64();
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(c as u64);
            let len = CHUNK.min(m - c * CHUNK);
            let mut lw = Vec::with_capacity(len);
            let mut lwt = Vec::with_capacity(len);
            for _ in 0..len {
                let (mut w, mut noise_sum) = (0.0, 0.0);
                for t in 1..pts.len() {
                    let delta = pts[t] - pts[t - 1];
                    let (mean, var) = laws[t - 1];
                    let z0: f64 = StandardNormal.sample(&mut r);
                    let theta = mean + var.sqrt() * z0;
                    w += delta * toy.exact_loglik(theta);
                    let z1: f64 = StandardNormal.sample(&mut r);
                    let z_mean = match noise.law {
                        ZLaw::Tempered => noise.sigma2 * (pts[t - 1] - 0.5),
                        ZLaw::Untempered => -0.5 * noise.sigma2,
                    };
                    noise_sum += delta * (z_mean + sd * z1);
                }
                lw.push(w);
                lwt.push(w + noise_sum);
            }
            (lw, lwt)
        })
        .collect();
    let (mut log_w, mut log_w_tilde) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for (a, b) in chunks {
        log_w.extend(a);
        log_w_tilde.extend(b);
    }
    Ok(PerfectMixingResult {
        ess_ais: ess_from_log_weights(&log_w)?,
        ess_aisel: ess_from_log_weights(&log_w_tilde)?,
        log_w,
        log_w_tilde,
    })
}

/// `exp(-tau sigma^2)`.
pub fn ess_ratio_theory(tau: f64, sigma2: f64) -> f64 {
    (-tau * sigma2).exp()
}

/// `M sum_i (phi(theta_i) - phi_hat)^2 W_i^2` on constrained parameters.
/// Refuses ensembles that went through resampling.
pub fn closed_form_variance(ensemble: &Ensemble, phi: impl Fn(&[f64]) -> f64) -> Result<f64> {
    if ensemble.resample_count > 0 {
        return Err(AiselError::ContractViolation(format!(
            "variance formula is only valid without resampling; the ensemble was resampled {} times",
            ensemble.resample_count
        )));
    }
    let w = ensemble.weights()?;
    let values: Vec<f64> = ensemble.particles.iter().map(|p| phi(&p.theta.constrained())).collect();
    let mean: f64 = values.iter().zip(&w).filter(|(_, w)| **w > 0.0).map(|(v, w)| v * w).sum();
    let m = ensemble.len() as f64;
    Ok(m * values.iter().zip(&w).filter(|(_, w)| **w > 0.0).map(|(v, w)| (v - mean).powi(2) * w * w).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssRatioRow {
    pub ladder: String,
    pub sigma2: f64,
    pub tau: f64,
    pub ess_ratio_measured: f64,
    pub ess_ratio_theory: f64,
}

impl EssRatioRow {
    pub fn relative_error(&self) -> f64 {
        (self.ess_ratio_measured / self.ess_ratio_theory - 1.0).abs()
    }
}

/// Measured against predicted ESS ratio for every `(ladder, sigma2)` pair.
pub fn ess_ratio_table<R: Rng + ?Sized>(
    toy: &GaussianToy,
    ladders: &[(String, AnnealingSchedule)],
    sigma2s: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<Vec<EssRatioRow>> {
    let mut rows = Vec::new();
    for (label, s) in ladders {
        for &sigma2 in sigma2s {
            let r = perfect_mixing_ais(toy, s, m, NoiseSpec::new(sigma2)?, rng)?;
            rows.push(EssRatioRow {
                ladder: label.clone(),
                sigma2,
                tau: s.tau(),
                ess_ratio_measured: r.ess_ratio(),
                ess_ratio_theory: ess_ratio_theory(s.tau(), sigma2),
            });
        }
    }
    Ok(rows)
}

/// Columns `ladder,sigma2,tau,ess_ratio_measured,ess_ratio_theory`.
pub fn write_ess_ratio_csv<W: Write>(rows: &[EssRatioRow], mut w: W) -> Result<()> {
    writeln!(w, "ladder,sigma2,tau,ess_ratio_measured,ess_ratio_theory")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.ladder, r.sigma2, r.tau, r.ess_ratio_measured, r.ess_ratio_theory)?;
    }
    Ok(())
}

/// The toy used by the perfect-mixing checks: ten observations, unit
/// observation variance, standard normal prior.
pub fn theory_toy<R: Rng + ?Sized>(rng: &mut R) -> Result<GaussianToy> {
    GaussianToy::simulate(10, 0.5, 1.0, 0.0, 1.0, rng)
}
