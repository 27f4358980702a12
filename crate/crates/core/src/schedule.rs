//! Annealing ladders `0 = a_0 < a_1 < ... < a_T = 1`.

use crate::error::{invalid, Result};

/// Shape of a generated ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// `a_t = (t / T)^exponent`.
    Power { exponent: f64 },
}

/// A validated, strictly increasing temperature ladder from 0 to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingSchedule {
    points: Vec<f64>,
}

impl AnnealingSchedule {
    /// Validates an explicit ladder.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return invalid("schedule needs at least two temperatures");
        }
        if points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return invalid("schedule must start at 0 and end at 1");
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("schedule must be strictly increasing");
        }
        Ok(Self { points })
    }

    pub fn power(steps: usize, exponent: f64) -> Result<Self> {
        make_schedule(ScheduleKind::Power { exponent }, steps)
    }

    pub fn linear(steps: usize) -> Result<Self> {
        Self::power(steps, 1.0)
    }

    /// Parses `linear:T`, `cubic:T` or `powerK:T` (for `a_t = (t/T)^K`).
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, steps) = spec
            .split_once(':')
            .ok_or_else(|| crate::AiselError::Parse(format!("ladder `{spec}` is not KIND:T")))?;
        let steps: usize = steps
            .trim()
            .parse()
            .map_err(|_| crate::AiselError::Parse(format!("ladder `{spec}`: bad step count")))?;
        let exponent = match kind.trim() {
            "linear" => 1.0,
            "cubic" => 3.0,
            k => k
                .strip_prefix("power")
                .and_then(|e| e.parse::<f64>().ok())
                .ok_or_else(|| crate::AiselError::Parse(format!("ladder `{spec}`: unknown kind `{k}`")))?,
        };
        Self::power(steps, exponent)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of annealing steps `T` (one less than the number of points).
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn get(&self, t: usize) -> f64 {
        self.points[t]
    }

    pub fn tau(&self) -> f64 {
        tau(self)
    }
}

/// Builds `a_t = (t/T)^exponent` for `t = 0..=T`.
pub fn make_schedule(kind: ScheduleKind, steps: usize) -> Result<AnnealingSchedule> {
    let ScheduleKind::Power { exponent } = kind;
    if steps == 0 {
        return invalid("number of annealing steps must be positive");
    }
    if !(exponent > 0.0) || !exponent.is_finite() {
        return invalid(format!("schedule exponent must be positive, got {exponent}"));
    }
    let n = steps as f64;
    let mut points: Vec<f64> = (0..=steps).map(|t| (t as f64 / n).powf(exponent)).collect();
    // (T/T)^p is exactly 1 but keep the endpoint pinned regardless of powf.
    points[steps] = 1.0;
    AnnealingSchedule::new(points)
}

/// The ESS degradation exponent `sum_t (a_t - a_{t-1}) (2 a_t - 1)`.
///
/// Because `sum_t (a_t - a_{t-1}) = 1` and `sum_t (a_t^2 - a_{t-1}^2) = 1`, this is
/// the same quantity as `sum_t (a_t - a_{t-1})^2`; the squared form is what is
/// evaluated here since it has no cancellation.
pub fn tau(schedule: &AnnealingSchedule) -> f64 {
    schedule
        .points
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            d * d
        })
        .sum()
}
