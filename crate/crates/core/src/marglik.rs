//! Marginal likelihood along the annealing ladder by trapezoid integration of
//! `f(a) = E_{xi_a}[log p(theta) + log p_hat(y | theta) - log pi0(theta)]`.

use std::io::Write;

use crate::ensemble::Ensemble;
use crate::error::{invalid, Result};
use crate::likelihood::{InitialDensity, Model};

/// `f_hat(a_t)` for `t = 0..=T` and the resulting log evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceTrace {
    pub temperatures: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub log_ml: f64,
}

impl EvidenceTrace {
    pub fn new(temperatures: Vec<f64>, f_hat: Vec<f64>) -> Result<Self> {
        let log_ml = log_ml_trapezoid(&temperatures, &f_hat)?;
        Ok(Self { temperatures, f_hat, log_ml })
    }

    /// Columns `t,a_t,f_hat`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,a_t,f_hat")?;
        for (t, (a, f)) in self.temperatures.iter().zip(&self.f_hat).enumerate() {
            writeln!(w, "{t},{a},{f}")?;
        }
        Ok(())
    }

    /// Reads the format written by [`EvidenceTrace::write_csv`] and recomputes `log_ml`.
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut temps = Vec::new();
        let mut f = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let s = line.trim();
            if s.is_empty() || (i == 0 && s.starts_with('t')) {
                continue;
            }
            let cols: Vec<&str> = s.split(',').collect();
            let parse = |c: &str| {
                c.trim().parse::<f64>().map_err(|_| crate::AiselError::Parse(format!("line {}: bad number `{c}`", i + 1)))
            };
            if cols.len() != 3 {
                return Err(crate::AiselError::Parse(format!("line {}: expected 3 columns", i + 1)));
            }
            temps.push(parse(cols[1])?);
            f.push(parse(cols[2])?);
        }
        Self::new(temps, f)
    }
}

/// Weighted mean of the log ratio `log p(theta) + log_lhat - log pi0(theta)`
/// over the current (normalized) weights, reusing stored estimates.
pub fn f_hat<M: Model, P: InitialDensity>(ensemble: &Ensemble, model: &M, pi0: &P) -> Result<f64> {
    for p in &ensemble.particles {
        p.stored_log_lhat()?;
    }
    ensemble.weighted_mean(|p| {
        let theta = p.theta.constrained();
        model.log_prior(&theta) + p.log_lhat.unwrap_or(f64::NAN) - pi0.log_density(&theta)
    })
}

/// `sum_t (a_{t+1} - a_t) (f_{t+1} + f_t) / 2`.
pub fn log_ml_trapezoid(temperatures: &[f64], f_hat: &[f64]) -> Result<f64> {
    if temperatures.len() != f_hat.len() {
        return invalid(format!("{} temperatures but {} f_hat values", temperatures.len(), f_hat.len()));
    }
    if temperatures.len() < 2 {
        return invalid("trapezoid rule needs at least two temperatures");
    }
    Ok(temperatures
        .windows(2)
        .zip(f_hat.windows(2))
        .map(|(a, f)| (a[1] - a[0]) * (f[1] + f[0]) / 2.0)
        .sum())
}
