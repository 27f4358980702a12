//! Scalar log densities and the multivariate-t initial density.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};
use crate::likelihood::InitialDensity;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
}

/// Inverse gamma with shape `a` and scale `b`: density proportional to `x^{-a-1} e^{-b/x}`.
pub fn inv_gamma_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `log(1 + e^x)` without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Multivariate Student-t with diagonal scale matrix.
///
/// Optionally truncated to the orthant where selected coordinates are positive
/// (used when some coordinates are variances); the density is then
/// renormalized by the orthant probability.
#[derive(Debug, Clone)]
pub struct MultivariateT {
    mean: Vec<f64>,
    scale_diag: Vec<f64>,
    df: f64,
    positive: Vec<usize>,
    log_norm: f64,
    log_orthant: f64,
}

impl MultivariateT {
    pub fn new(mean: Vec<f64>, scale_diag: Vec<f64>, df: f64) -> Result<Self> {
        if mean.len() != scale_diag.len() || mean.is_empty() {
            return invalid("mean and scale must have the same nonzero length");
        }
        if !(df > 0.0) || scale_diag.iter().any(|s| !(*s > 0.0)) {
            return invalid("degrees of freedom and scales must be positive");
        }
        let d = mean.len() as f64;
        let log_norm = ln_gamma((df + d) / 2.0)
            - ln_gamma(df / 2.0)
            - 0.5 * d * (df * PI).ln()
            - 0.5 * scale_diag.iter().map(|s| s.ln()).sum::<f64>();
        Ok(Self { mean, scale_diag, df, positive: Vec::new(), log_norm, log_orthant: 0.0 })
    }

    /// Restricts the density to `{x_k > 0 for k in coords}`.
    pub fn truncated_positive(mut self, coords: Vec<usize>) -> Result<Self> {
        if coords.iter().any(|&k| k >= self.mean.len()) {
            return invalid("truncation coordinate out of range");
        }
        self.positive = coords;
        self.log_orthant = self.orthant_probability().ln();
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Log of the untruncated density's mass on the truncation orthant.
    pub fn log_orthant_probability(&self) -> f64 {
        self.log_orthant
    }

    /// `P(x_k > 0, k in positive)` via the normal / chi-square mixture
    /// representation, integrated over the mixing variable with Simpson's rule.
    fn orthant_probability(&self) -> f64 {
        if self.positive.is_empty() {
            return 1.0;
        }
        let nu = self.df;
        // mean + scale^{1/2} Z / sqrt(W / nu), W ~ chi2(nu)
        let integrand = |w: f64| -> f64 {
            if w <= 0.0 {
                return 0.0;
            }
            let log_chi2 = (nu / 2.0 - 1.0) * w.ln() - w / 2.0 - (nu / 2.0) * 2f64.ln() - ln_gamma(nu / 2.0);
            let r = (w / nu).sqrt();
            let p: f64 = self
                .positive
                .iter()
                .map(|&k| std_normal_cdf(self.mean[k] * r / self.scale_diag[k].sqrt()))
                .product();
            log_chi2.exp() * p
        };
        let upper = nu + 60.0 * (2.0 * nu).sqrt() + 60.0;
        let n = 20_000;
        let h = upper / n as f64;
        let mut s = integrand(0.0) + integrand(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * integrand(i as f64 * h);
        }
        s * h / 3.0
    }

    fn in_orthant(&self, x: &[f64]) -> bool {
        self.positive.iter().all(|&k| x[k] > 0.0)
    }

    /// Draw from the untruncated t.
    pub fn sample_untruncated<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let w: f64 = ChiSquared::new(self.df).unwrap().sample(rng);
        let r = (self.df / w).sqrt();
        self.mean
            .iter()
            .zip(&self.scale_diag)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s.sqrt() * z * r
            })
            .collect()
    }
}

impl InitialDensity for MultivariateT {
    /// Draws from the untruncated t; draws outside the orthant are left for the
    /// caller's support check to reject, which realizes the truncated law.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_untruncated(rng)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        if x.len() != self.dim() || !self.in_orthant(x) {
            return f64::NEG_INFINITY;
        }
        let q: f64 = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale_diag)
            .map(|((xi, m), s)| (xi - m).powi(2) / s)
            .sum();
        self.log_norm - 0.5 * (self.df + self.dim() as f64) * (q / self.df).ln_1p() - self.log_orthant
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn scalar_densities_integrate_to_one() {
        let beta = simpson(|x| beta_logpdf(x, 15.0, 1.5).exp(), 1e-12, 1.0 - 1e-12, 200_000);
        assert!((beta - 1.0).abs() < 0.01, "beta {beta}");
        let ig = simpson(|x| inv_gamma_logpdf(x, 10.0, 0.1).exp(), 1e-6, 1.0, 200_000);
        assert!((ig - 1.0).abs() < 0.01, "inv gamma {ig}");
        let n = simpson(|x| normal_logpdf(x, 0.0, 100.0).exp(), -100.0, 100.0, 20_000);
        assert!((n - 1.0).abs() < 0.01, "normal {n}");
    }

    #[test]
    fn beta_mode_matches_formula() {
        // Mode of Be(a, b) is (a - 1)/(a + b - 2) = 14/14.5.
        let grid = (1..100_000).map(|i| i as f64 / 100_000.0);
        let mode = grid
            .max_by(|a, b| beta_logpdf(*a, 15.0, 1.5).partial_cmp(&beta_logpdf(*b, 15.0, 1.5)).unwrap())
            .unwrap();
        assert!((mode - 14.0 / 14.5).abs() < 2e-5, "mode {mode}");
    }

    #[test]
    fn t_density_at_mean() {
        let t = MultivariateT::new(vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0], vec![3.0; 6], 10.0).unwrap();
        let expected = ln_gamma(8.0) - ln_gamma(5.0) - 3.0 * (10.0 * PI).ln() - 3.0 * 3f64.ln();
        assert!((t.log_density(t.mean()) - expected).abs() < 1e-12);
    }

    #[test]
    fn one_dim_t_integrates_to_one() {
        let t = MultivariateT::new(vec![0.5], vec![2.0], 4.0).unwrap();
        let z = simpson(|x| t.log_density(&[x]).exp(), -2000.0, 2000.0, 400_000);
        assert!((z - 1.0).abs() < 1e-3, "{z}");
    }

    #[test]
    fn orthant_probability_matches_monte_carlo() {
        let t = MultivariateT::new(vec![0.0, 0.0, 1.0, 2.0], vec![3.0; 4], 10.0)
            .unwrap()
            .truncated_positive(vec![2, 3])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let hits = (0..n).filter(|_| t.in_orthant(&t.sample_untruncated(&mut rng))).count() as f64;
        let p = hits / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let exact = t.log_orthant_probability().exp();
        assert!((p - exact).abs() < 4.0 * se, "mc {p} vs {exact}");
    }

    #[test]
    fn truncated_one_dim_integrates_to_one() {
        let t = MultivariateT::new(vec![1.0], vec![3.0], 10.0).unwrap().truncated_positive(vec![0]).unwrap();
        let z = simpson(|x| t.log_density(&[x]).exp(), 1e-12, 5000.0, 2_000_000);
        assert!((z - 1.0).abs() < 1e-3, "{z}");
    }

    #[test]
    fn t_sample_covariance() {
        // Cov = scale * nu / (nu - 2) = 3 * 10 / 8.
        let t = MultivariateT::new(vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0], vec![3.0; 6], 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| t.sample_untruncated(&mut rng)).collect();
        for k in 0..6 {
            let mean = draws.iter().map(|d| d[k]).sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((var / 3.75 - 1.0).abs() < 0.05, "coord {k}: var {var}");
        }
        let c01 = draws.iter().map(|d| d[0] * d[1]).sum::<f64>() / n as f64;
        assert!(c01.abs() < 0.1, "cross covariance {c01}");
    }

    #[test]
    fn log1p_exp_is_stable() {
        assert!((log1p_exp(800.0) - 800.0).abs() < 1e-12);
        assert!(log1p_exp(-800.0) >= 0.0 && log1p_exp(-800.0) < 1e-300);
        assert!((log1p_exp(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
