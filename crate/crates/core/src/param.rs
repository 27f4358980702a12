//! Parameter layouts and the unconstrained reparameterization used by the
//! random-walk moves.

use std::sync::Arc;

use crate::error::{invalid, Result};

/// Support of a single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Real,
    /// `(0, inf)`, mapped through `exp`.
    Positive,
    /// `(lo, hi)`, mapped through a scaled logistic.
    Interval(f64, f64),
}

impl Support {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::Real => x.is_finite(),
            Support::Positive => x > 0.0 && x.is_finite(),
            Support::Interval(lo, hi) => x > lo && x < hi,
        }
    }

    pub fn to_constrained(&self, u: f64) -> f64 {
        match *self {
            Support::Real => u,
            Support::Positive => u.exp(),
            Support::Interval(lo, hi) => lo + (hi - lo) * logistic(u),
        }
    }

    pub fn to_unconstrained(&self, x: f64) -> f64 {
        match *self {
            Support::Real => x,
            Support::Positive => x.ln(),
            Support::Interval(lo, hi) => {
                let p = (x - lo) / (hi - lo);
                p.ln() - (-p).ln_1p()
            }
        }
    }

    /// `log |dx/du|` at unconstrained point `u`.
    pub fn log_jacobian(&self, u: f64) -> f64 {
        match *self {
            Support::Real => 0.0,
            Support::Positive => u,
            // log s(u) + log(1 - s(u)) = -|u| - 2 log(1 + e^{-|u|})
            Support::Interval(lo, hi) => (hi - lo).ln() - u.abs() - 2.0 * (-u.abs()).exp().ln_1p(),
        }
    }
}

pub(crate) fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Ordered parameter names with their supports.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    entries: Vec<(String, Support)>,
}

impl Layout {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, Support)>) -> Arc<Self> {
        Arc::new(Self {
            entries: entries.into_iter().map(|(n, s)| (n.into(), s)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn supports(&self) -> impl Iterator<Item = Support> + '_ {
        self.entries.iter().map(|(_, s)| *s)
    }

    pub fn contains(&self, constrained: &[f64]) -> bool {
        constrained.len() == self.dim() && self.supports().zip(constrained).all(|(s, &x)| s.contains(x))
    }
}

/// A point in parameter space, stored on the unconstrained scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn from_unconstrained(values: Vec<f64>, layout: Arc<Layout>) -> Result<Self> {
        if values.len() != layout.dim() {
            return invalid(format!(
                "parameter vector has {} entries, layout expects {}",
                values.len(),
                layout.dim()
            ));
        }
        Ok(Self { values, layout })
    }

    pub fn from_constrained(constrained: &[f64], layout: Arc<Layout>) -> Result<Self> {
        if !layout.contains(constrained) {
            return invalid(format!("point {constrained:?} is outside the parameter support"));
        }
        let values = layout
            .supports()
            .zip(constrained)
            .map(|(s, &x)| s.to_unconstrained(x))
            .collect();
        Ok(Self { values, layout })
    }

    pub fn unconstrained(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn constrained(&self) -> Vec<f64> {
        self.layout
            .supports()
            .zip(&self.values)
            .map(|(s, &u)| s.to_constrained(u))
            .collect()
    }

    /// Sum of per-coordinate `log |dx/du|`.
    pub fn log_jacobian(&self) -> f64 {
        self.layout
            .supports()
            .zip(&self.values)
            .map(|(s, &u)| s.log_jacobian(u))
            .sum()
    }
}
