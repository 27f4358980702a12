//! Log-domain weight arithmetic.

use crate::error::{AiselError, Result};

/// `log(sum(exp(x_i)))`, stabilized by the maximum. Returns `-inf` for an
/// empty slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Normalized natural-domain weights together with the log of their unnormalized sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub weights: Vec<f64>,
    pub log_sum: f64,
}

/// Converts log weights into natural weights summing to one.
///
/// Fails with [`AiselError::TotalDegeneracy`] when no entry is finite, which is
/// how estimator collapse surfaces to the sampler.
pub fn normalize(log_weights: &[f64]) -> Result<Normalized> {
    if log_weights.iter().any(|w| w.is_nan()) {
        return Err(AiselError::InvalidArgument("NaN log weight".into()));
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(AiselError::TotalDegeneracy(log_weights.len()));
    }
    if max == f64::INFINITY {
        return Err(AiselError::InvalidArgument("+inf log weight".into()));
    }
    let mut weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Normalized { weights, log_sum: max + total.ln() })
}

/// `1 / sum W_i^2` for weights that already sum to one.
pub fn ess_normalized(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Effective sample size `(sum w)^2 / sum w^2` straight from log weights,
/// i.e. `M / (1 + CV)` with the sample coefficient of variation.
pub fn ess_from_log_weights(log_weights: &[f64]) -> Result<f64> {
    let lse = log_sum_exp(log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(AiselError::TotalDegeneracy(log_weights.len()));
    }
    let doubled: Vec<f64> = log_weights.iter().map(|w| 2.0 * w).collect();
    Ok((2.0 * lse - log_sum_exp(&doubled)).exp())
}
