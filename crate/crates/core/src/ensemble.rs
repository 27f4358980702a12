//! Weighted particle collections.

use rand::Rng;

use crate::error::{AiselError, Result};
use crate::param::ParamVector;
use crate::resample::{resample_indices, ResampleMethod};
use crate::weights::{ess_normalized, normalize};

/// A parameter draw together with the likelihood estimate it carries.
///
/// The stored `log_lhat` plays the role of the auxiliary noise variable: it is
/// produced once when the point is created (or accepted) and then reused by
/// every later reweighting and acceptance ratio. `None` means no estimate has
/// been drawn yet; `Some(-inf)` means the estimator returned zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub theta: ParamVector,
    pub log_lhat: Option<f64>,
    pub log_weight: f64,
}

impl Particle {
    pub fn new(theta: ParamVector, log_lhat: f64) -> Self {
        Self { theta, log_lhat: Some(log_lhat), log_weight: 0.0 }
    }

    pub fn stored_log_lhat(&self) -> Result<f64> {
        self.log_lhat
            .ok_or_else(|| AiselError::ContractViolation("particle has no stored likelihood estimate".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub particles: Vec<Particle>,
    /// When set, `exp(log_weight)` sums to one across particles.
    pub normalized: bool,
    /// Number of resampling events this ensemble has been through.
    pub resample_count: usize,
}

impl Ensemble {
    /// Uniformly weighted ensemble (`W_i = 1/M`).
    pub fn uniform(mut particles: Vec<Particle>) -> Self {
        let lw = -(particles.len() as f64).ln();
        for p in &mut particles {
            p.log_weight = lw;
        }
        Self { particles, normalized: true, resample_count: 0 }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight).collect()
    }

    /// Natural-domain weights. Requires a normalized ensemble.
    pub fn weights(&self) -> Result<Vec<f64>> {
        self.require_normalized()?;
        Ok(self.particles.iter().map(|p| p.log_weight.exp()).collect())
    }

    /// Renormalizes in place and returns the log of the pre-normalization sum.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = normalize(&self.log_weights())?;
        for (p, w) in self.particles.iter_mut().zip(&n.weights) {
            p.log_weight = w.ln();
        }
        self.normalized = true;
        Ok(n.log_sum)
    }

    pub fn ess(&self) -> Result<f64> {
        Ok(ess_normalized(&self.weights()?))
    }

    /// Weighted mean of `f` over particles, skipping zero-weight particles so a
    /// `-inf` quantity attached to a dead particle does not poison the sum.
    pub fn weighted_mean(&self, mut f: impl FnMut(&Particle) -> f64) -> Result<f64> {
        let w = self.weights()?;
        Ok(self
            .particles
            .iter()
            .zip(&w)
            .filter(|(_, &w)| w > 0.0)
            .map(|(p, &w)| w * f(p))
            .sum())
    }

    fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(AiselError::ContractViolation("ensemble weights are not normalized".into()))
        }
    }
}

/// Draws `M` ancestors and returns an equally weighted ensemble. Each child
/// carries its ancestor's parameters and stored likelihood estimate.
pub fn resample<R: Rng + ?Sized>(ensemble: &Ensemble, method: ResampleMethod, rng: &mut R) -> Result<Ensemble> {
    let w = ensemble.weights()?;
    let idx = resample_indices(&w, ensemble.len(), method, rng);
    let particles = idx.into_iter().map(|i| ensemble.particles[i].clone()).collect();
    let mut out = Ensemble::uniform(particles);
    out.resample_count = ensemble.resample_count + 1;
    Ok(out)
}
