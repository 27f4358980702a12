#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use aisel::particle_filter::StateSpaceModel;
use aisel::{EstimatorSettings, Layout, LikelihoodEstimate, Model, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// `x_1 ~ N(m1, v1)`, `x_{t+1} = a x_t + c + sqrt(q) e`, `y_t = x_t + sqrt(r) d`.
#[derive(Debug, Clone, Copy)]
pub struct LinearGaussian {
    pub m1: f64,
    pub v1: f64,
    pub a: f64,
    pub c: f64,
    pub q: f64,
    pub r: f64,
}

impl LinearGaussian {
    pub fn simulate<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut x = self.m1 + self.v1.sqrt() * normal(rng);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            ys.push(x + self.r.sqrt() * normal(rng));
            x = self.a * x + self.c + self.q.sqrt() * normal(rng);
        }
        ys
    }

    /// Exact log-likelihood by the Kalman filter.
    pub fn kalman_loglik(&self, y: &[f64]) -> f64 {
        let (mut m, mut v) = (self.m1, self.v1);
        let mut ll = 0.0;
        for &yt in y {
            let s = v + self.r;
            ll += -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + (yt - m).powi(2) / s);
            let k = v / s;
            let mf = m + k * (yt - m);
            let vf = (1.0 - k) * v;
            m = self.a * mf + self.c;
            v = self.a * self.a * vf + self.q;
        }
        ll
    }
}

impl StateSpaceModel for LinearGaussian {
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.m1 + self.v1.sqrt() * normal(rng)
    }

    fn transition<R: Rng + ?Sized>(&self, h: f64, _y: f64, rng: &mut R) -> f64 {
        self.a * h + self.c + self.q.sqrt() * normal(rng)
    }

    fn measurement_logdensity(&self, h: f64, y: f64) -> f64 {
        -0.5 * ((2.0 * std::f64::consts::PI * self.r).ln() + (y - h).powi(2) / self.r)
    }
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn se(xs: &[f64]) -> f64 {
    (var(xs) / xs.len() as f64).sqrt()
}

/// Least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Wraps a model and counts calls to its estimator.
pub struct Counting<M> {
    pub inner: M,
    pub calls: AtomicU64,
}

impl<M> Counting<M> {
    pub fn new(inner: M) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<M: Model> Model for Counting<M> {
    fn layout(&self) -> &Arc<Layout> {
        self.inner.layout()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.inner.log_prior(theta)
    }

    fn estimate<R: Rng + ?Sized>(&self, theta: &[f64], settings: &EstimatorSettings, rng: &mut R) -> Result<LikelihoodEstimate> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.estimate(theta, settings, rng)
    }
}
