//! Mixed-effects logistic regression with a random intercept and slope.
//!
//! `P(y_ij = 1) = logistic(beta0 + x_ij' beta + eta_i0 + z_ij eta_i1)`,
//! `eta_i ~ N(0, diag(sigma1^2, sigma2^2))`. Parameters are ordered
//! `(beta0, beta1, beta2, beta3, sigma1_sq, sigma2_sq)`.
//!
//! The likelihood integrates each cluster's two random effects out; it is
//! estimated by importance sampling per cluster, and the product of the
//! independent per-cluster estimates is unbiased for the full likelihood.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dist::{log1p_exp, normal_logpdf, MultivariateT};
use crate::error::{invalid, AiselError, Result};
use crate::likelihood::{
    replicate_estimate, var_log_estimate, EstimatorSettings, LikelihoodEstimate, Model, VarianceMethod, VarianceSample,
};
use crate::param::{logistic, Layout, Support};
use crate::weights::log_sum_exp;

pub const N_FIXED: usize = 4;
pub const N_PARAMS: usize = 6;

/// Simulation settings; `Default` is the m = 50, n_i = 10 design with
/// `beta0 = -3`, `beta = (2, -2, 2)`, `sigma^2 = (2, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmmSpec {
    pub clusters: usize,
    pub per_cluster: usize,
    pub beta0: f64,
    pub beta: [f64; 3],
    pub sigma2: [f64; 2],
}

impl Default for GlmmSpec {
    fn default() -> Self {
        Self { clusters: 50, per_cluster: 10, beta0: -3.0, beta: [2.0, -2.0, 2.0], sigma2: [2.0, 1.0] }
    }
}

impl GlmmSpec {
    pub fn theta(&self) -> [f64; N_PARAMS] {
        [self.beta0, self.beta[0], self.beta[1], self.beta[2], self.sigma2[0], self.sigma2[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmmObservation {
    pub y: bool,
    pub x: [f64; 3],
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlmmData {
    pub clusters: Vec<Vec<GlmmObservation>>,
}

impl GlmmData {
    pub fn n_obs(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Writes `cluster_id,y,x1,x2,x3,z` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "cluster_id,y,x1,x2,x3,z")?;
        for (i, c) in self.clusters.iter().enumerate() {
            for o in c {
                writeln!(w, "{},{},{},{},{},{}", i, o.y as u8, o.x[0], o.x[1], o.x[2], o.z)?;
            }
        }
        Ok(())
    }

    /// Reads the format written by [`GlmmData::write_csv`]. Rows of a cluster
    /// need not be contiguous; cluster ids must be dense from zero.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut clusters: Vec<Vec<GlmmObservation>> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("cluster_id")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(AiselError::Parse(format!("line {}: expected 6 fields", lineno + 1)));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| AiselError::Parse(format!("line {}: bad number `{s}`", lineno + 1)))
            };
            let id: usize = fields[0]
                .parse()
                .map_err(|_| AiselError::Parse(format!("line {}: bad cluster id", lineno + 1)))?;
            let y = match fields[1] {
                "0" => false,
                "1" => true,
                other => return Err(AiselError::Parse(format!("line {}: response `{other}` is not 0/1", lineno + 1))),
            };
            let obs = GlmmObservation { y, x: [parse(fields[2])?, parse(fields[3])?, parse(fields[4])?], z: parse(fields[5])? };
            if id >= clusters.len() {
                clusters.resize_with(id + 1, Vec::new);
            }
            clusters[id].push(obs);
        }
        if clusters.is_empty() || clusters.iter().any(Vec::is_empty) {
            return Err(AiselError::Parse("cluster ids must be dense and nonempty".into()));
        }
        Ok(Self { clusters })
    }
}

/// Draws covariates from U(0,1), random effects from N(0, Sigma) and binary responses.
pub fn simulate_glmm<R: Rng + ?Sized>(spec: &GlmmSpec, rng: &mut R) -> GlmmData {
    let clusters = (0..spec.clusters)
        .map(|_| {
            let e0: f64 = StandardNormal.sample(rng);
            let e1: f64 = StandardNormal.sample(rng);
            let eta = [spec.sigma2[0].sqrt() * e0, spec.sigma2[1].sqrt() * e1];
            (0..spec.per_cluster)
                .map(|_| {
                    let x = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
                    let z = rng.random::<f64>();
                    let lin = spec.beta0 + spec.beta[0] * x[0] + spec.beta[1] * x[1] + spec.beta[2] * x[2] + eta[0] + z * eta[1];
                    GlmmObservation { y: rng.random::<f64>() < logistic(lin), x, z }
                })
                .collect()
        })
        .collect();
    GlmmData { clusters }
}

/// Per-cluster importance density for the random effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GlmmProposal {
    /// The random-effects prior `N(0, Sigma)`.
    #[default]
    Prior,
    /// Gaussian at the mode of the cluster's integrand with the inverse negative
    /// Hessian as covariance.
    Laplace,
}

#[derive(Debug, Clone)]
pub struct GlmmModel {
    pub data: GlmmData,
    pub proposal: GlmmProposal,
    layout: Arc<Layout>,
}

impl GlmmModel {
    pub fn new(data: GlmmData) -> Self {
        let layout = Layout::new([
            ("beta0", Support::Real),
            ("beta1", Support::Real),
            ("beta2", Support::Real),
            ("beta3", Support::Real),
            ("sigma1_sq", Support::Positive),
            ("sigma2_sq", Support::Positive),
        ]);
        Self { data, proposal: GlmmProposal::Prior, layout }
    }

    pub fn with_proposal(mut self, proposal: GlmmProposal) -> Self {
        self.proposal = proposal;
        self
    }
}

/// The default initial density: multivariate t with mean `(0,0,0,0,1,2)`, scale
/// `3 I` and 10 degrees of freedom, restricted to positive variances.
pub fn glmm_initial_density() -> MultivariateT {
    MultivariateT::new(vec![0.0, 0.0, 0.0, 0.0, 1.0, 2.0], vec![3.0; N_PARAMS], 10.0)
        .and_then(|t| t.truncated_positive(vec![4, 5]))
        .expect("constant initial density is valid")
}

impl Model for GlmmModel {
    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    /// `N(0, 100)` on each fixed effect and `p(sigma_k^2) ∝ 1/sigma_k^2`.
    fn log_prior(&self, theta: &[f64]) -> f64 {
        if !(theta[4] > 0.0 && theta[5] > 0.0) {
            return f64::NEG_INFINITY;
        }
        theta[..N_FIXED].iter().map(|b| normal_logpdf(*b, 0.0, 100.0)).sum::<f64>() - theta[4].ln() - theta[5].ln()
    }

    fn estimate<R: Rng + ?Sized>(&self, theta: &[f64], settings: &EstimatorSettings, rng: &mut R) -> Result<LikelihoodEstimate> {
        glmm_is_loglik(self, theta, settings, rng)
    }

    fn default_variance_method(&self) -> VarianceMethod {
        VarianceMethod::Delta
    }
}

struct ClusterWork<'a> {
    obs: &'a [GlmmObservation],
    fixed: Vec<f64>,
}

impl ClusterWork<'_> {
    /// `sum_j log p(y_j | eta)`, accumulated as `-log prod_j (1 + e^{s_j})`
    /// with `s_j = -l_j` for successes and `l_j` for failures, so that only one
    /// logarithm is taken per cluster in the common case.
    fn loglik(&self, eta0: f64, eta1: f64) -> f64 {
        let mut prod = 1.0f64;
        let mut acc = 0.0;
        for (o, f) in self.obs.iter().zip(&self.fixed) {
            let l = f + eta0 + o.z * eta1;
            let s = if o.y { -l } else { l };
            let e = s.exp();
            if e < 1e300 {
                prod *= 1.0 + e;
                if prod > 1e250 {
                    acc += prod.ln();
                    prod = 1.0;
                }
            } else {
                acc += log1p_exp(s);
            }
        }
        -(acc + prod.ln())
    }

    /// Mode and negative Hessian of `log p(y_i | eta) + log N(eta; 0, Sigma)`.
    fn laplace(&self, s2: [f64; 2]) -> ([f64; 2], [[f64; 3]; 1]) {
        let log_joint = |e: [f64; 2]| self.loglik(e[0], e[1]) - 0.5 * (e[0] * e[0] / s2[0] + e[1] * e[1] / s2[1]);
        let mut eta = [0.0, 0.0];
        let mut current = log_joint(eta);
        let mut neg_h = [0.0; 3];
        for _ in 0..100 {
            let (mut g0, mut g1) = (-eta[0] / s2[0], -eta[1] / s2[1]);
            let (mut h00, mut h01, mut h11) = (1.0 / s2[0], 0.0, 1.0 / s2[1]);
            for (o, f) in self.obs.iter().zip(&self.fixed) {
                let p = logistic(f + eta[0] + o.z * eta[1]);
                let r = o.y as u8 as f64 - p;
                g0 += r;
                g1 += r * o.z;
                let w = p * (1.0 - p);
                h00 += w;
                h01 += w * o.z;
                h11 += w * o.z * o.z;
            }
            neg_h = [h00, h01, h11];
            let det = h00 * h11 - h01 * h01;
            let step = [(h11 * g0 - h01 * g1) / det, (h00 * g1 - h01 * g0) / det];
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let cand = [eta[0] + t * step[0], eta[1] + t * step[1]];
                let val = log_joint(cand);
                if val >= current {
                    eta = cand;
                    current = val;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved || (step[0].abs() + step[1].abs()) * t < 1e-10 {
                break;
            }
        }
        (eta, [neg_h])
    }
}

fn cluster_work<'a>(obs: &'a [GlmmObservation], theta: &[f64]) -> ClusterWork<'a> {
    let fixed = obs
        .iter()
        .map(|o| theta[0] + theta[1] * o.x[0] + theta[2] * o.x[1] + theta[3] * o.x[2])
        .collect();
    ClusterWork { obs, fixed }
}

fn check_variances(theta: &[f64]) -> Result<[f64; 2]> {
    if theta.len() != N_PARAMS {
        return invalid(format!("GLMM expects {N_PARAMS} parameters, got {}", theta.len()));
    }
    let s2 = [theta[4], theta[5]];
    if s2.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return invalid(format!("random-effects variances {s2:?} do not form a valid covariance"));
    }
    Ok(s2)
}

/// Log inner weights `log u_k` for one cluster.
fn cluster_log_weights<R: Rng + ?Sized>(
    work: &ClusterWork<'_>,
    s2: [f64; 2],
    proposal: GlmmProposal,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    let sd = [s2[0].sqrt(), s2[1].sqrt()];
    let use_laplace = proposal == GlmmProposal::Laplace && s2[0] > 0.0 && s2[1] > 0.0;
    if !use_laplace {
        return (0..n)
            .map(|_| {
                let e0: f64 = StandardNormal.sample(rng);
                let e1: f64 = StandardNormal.sample(rng);
                work.loglik(sd[0] * e0, sd[1] * e1)
            })
            .collect();
    }
    let (mode, [[h00, h01, h11]]) = work.laplace(s2);
    // Proposal covariance C = (-H)^{-1}; factor C = L L'.
    let det = h00 * h11 - h01 * h01;
    let (c00, c01, c11) = (h11 / det, -h01 / det, h00 / det);
    let l00 = c00.sqrt();
    let l10 = c01 / l00;
    let l11 = (c11 - l10 * l10).max(0.0).sqrt();
    let log_det_l = l00.ln() + l11.ln();
    let log_prior_norm = -(2.0 * std::f64::consts::PI).ln() - 0.5 * (s2[0].ln() + s2[1].ln());
    (0..n)
        .map(|_| {
            let v0: f64 = StandardNormal.sample(rng);
            let v1: f64 = StandardNormal.sample(rng);
            let e0 = mode[0] + l00 * v0;
            let e1 = mode[1] + l10 * v0 + l11 * v1;
            let log_q = -(2.0 * std::f64::consts::PI).ln() - log_det_l - 0.5 * (v0 * v0 + v1 * v1);
            let log_prior = log_prior_norm - 0.5 * (e0 * e0 / s2[0] + e1 * e1 / s2[1]);
            work.loglik(e0, e1) + log_prior - log_q
        })
        .collect()
}

/// Importance-sampling likelihood estimate: per cluster, the mean of `N` inner
/// weights, multiplied across clusters.
pub fn glmm_is_loglik<R: Rng + ?Sized>(
    model: &GlmmModel,
    theta: &[f64],
    settings: &EstimatorSettings,
    rng: &mut R,
) -> Result<LikelihoodEstimate> {
    settings.validate()?;
    let s2 = check_variances(theta)?;
    let n = settings.n_particles;
    let log_n = (n as f64).ln();
    let works: Vec<ClusterWork<'_>> = model.data.clusters.iter().map(|c| cluster_work(c, theta)).collect();

    if s2 == [0.0, 0.0] {
        // The integrand no longer depends on the random effects.
        let exact: f64 = works.iter().map(|w| w.loglik(0.0, 0.0)).sum();
        let e = LikelihoodEstimate::new(exact, n);
        return Ok(if settings.variance.is_some() { e.with_var_log(0.0) } else { e });
    }

    let single = |rng: &mut R, method: Option<VarianceMethod>| -> Result<(f64, f64)> {
        let mut total = 0.0;
        let mut var = 0.0;
        for w in &works {
            let lu = cluster_log_weights(w, s2, model.proposal, n, rng);
            total += log_sum_exp(&lu) - log_n;
            if let Some(m @ (VarianceMethod::Delta | VarianceMethod::Jackknife)) = method {
                var += if n >= 2 { var_log_estimate(VarianceSample::InnerLogWeights(&lu), m)? } else { f64::INFINITY };
            }
        }
        Ok((total, var))
    };

    match settings.variance {
        None => Ok(LikelihoodEstimate::new(single(rng, None)?.0, n)),
        Some(VarianceMethod::Replicate(k)) => replicate_estimate(k, n, || Ok(single(rng, None)?.0)),
        Some(m) => {
            let (value, var) = single(rng, Some(m))?;
            Ok(LikelihoodEstimate::new(value, n).with_var_log(var))
        }
    }
}

/// Gauss-Hermite nodes and weights for the weight `e^{-x^2}` (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Adaptive Gauss-Hermite evaluation of the exact log-likelihood, `nodes` points
/// per random-effect dimension, centered and scaled at each cluster's Laplace
/// approximation. Intended as an oracle for small instances.
pub fn glmm_quadrature_loglik(data: &GlmmData, theta: &[f64], nodes: usize) -> Result<f64> {
    let s2 = check_variances(theta)?;
    if s2.iter().any(|v| *v == 0.0) {
        return invalid("quadrature oracle needs strictly positive variances");
    }
    let (x, w) = gauss_hermite(nodes);
    let log_prior_norm = -(2.0 * std::f64::consts::PI).ln() - 0.5 * (s2[0].ln() + s2[1].ln());
    let mut total = 0.0;
    for c in &data.clusters {
        let work = cluster_work(c, theta);
        let (mode, [[h00, h01, h11]]) = work.laplace(s2);
        let det = h00 * h11 - h01 * h01;
        let (c00, c01, c11) = (h11 / det, -h01 / det, h00 / det);
        let l00 = c00.sqrt();
        let l10 = c01 / l00;
        let l11 = (c11 - l10 * l10).sqrt();
        let mut terms = Vec::with_capacity(nodes * nodes);
        for i in 0..nodes {
            for j in 0..nodes {
                let v0 = std::f64::consts::SQRT_2 * x[i];
                let v1 = std::f64::consts::SQRT_2 * x[j];
                let e0 = mode[0] + l00 * v0;
                let e1 = mode[1] + l10 * v0 + l11 * v1;
                let g = work.loglik(e0, e1) + log_prior_norm - 0.5 * (e0 * e0 / s2[0] + e1 * e1 / s2[1]);
                terms.push(w[i].ln() + w[j].ln() + x[i] * x[i] + x[j] * x[j] + g);
            }
        }
        total += log_sum_exp(&terms) + 2f64.ln() + l00.ln() + l11.ln();
    }
    Ok(total)
}
