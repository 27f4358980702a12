mod common;

use aisel::models::toy::GaussianToy;
use aisel::theory::{closed_form_variance, ess_ratio_theory, perfect_mixing_ais, theory_toy, NoiseSpec};
use aisel::{aisel_run, AnnealingSchedule, SamplerConfig};
use common::{mean, se};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy() -> GaussianToy {
    theory_toy(&mut ChaCha8Rng::seed_from_u64(400)).unwrap()
}

#[test]
fn noisy_weights_are_unbiased_for_exact_weights() {
    let toy = toy();
    let s = AnnealingSchedule::linear(10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let r = perfect_mixing_ais(&toy, &s, 200_000, NoiseSpec::new(1.0).unwrap(), &mut rng).unwrap();
    let top = r.log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let diff: Vec<f64> = r.log_w.iter().zip(&r.log_w_tilde).map(|(a, b)| (b - top).exp() - (a - top).exp()).collect();
    let w: Vec<f64> = r.log_w.iter().map(|a| (a - top).exp()).collect();
    println!("E[w] {} E[w~ - w] {} +- {}", mean(&w), mean(&diff), se(&diff));
    assert!(mean(&diff).abs() < 3.0 * se(&diff));
}

#[test]
fn ess_ratio_grows_with_more_temperatures() {
    let toy = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(402);
    let ratios: Vec<f64> = [5, 10, 50]
        .iter()
        .map(|&t| perfect_mixing_ais(&toy, &AnnealingSchedule::linear(t).unwrap(), 100_000, NoiseSpec::new(2.0).unwrap(), &mut rng).unwrap().ess_ratio())
        .collect();
    println!("{ratios:?}");
    assert!(ratios[0] < ratios[1] && ratios[1] < ratios[2]);
    assert!((ratios[2] / ess_ratio_theory(0.02, 2.0) - 1.0).abs() < 0.05);
}

#[test]
fn closed_form_variance_matches_replicates() {
    let toy = toy();
    let pi0 = toy.prior_density();
    let mut config = SamplerConfig::new(500, AnnealingSchedule::linear(10).unwrap(), 1);
    config.ess_fraction = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(403);
    let mut estimates = Vec::new();
    let mut predicted = Vec::new();
    for _ in 0..100 {
        let out = aisel_run(&toy, &pi0, &config, &mut rng).unwrap();
        assert_eq!(out.report.resample_count, 0);
        estimates.push(out.report.posterior_mean[0]);
        predicted.push(closed_form_variance(&out.ensemble, |x| x[0]).unwrap() / 500.0);
    }
    let m = mean(&estimates);
    let empirical = estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() / 99.0;
    let ratio = empirical / mean(&predicted);
    println!("empirical {empirical} predicted {} ratio {ratio}", mean(&predicted));
    assert!((0.5..=2.0).contains(&ratio));
}

#[test]
fn variance_formula_refuses_resampled_ensembles() {
    let toy = toy();
    let pi0 = toy.prior_density();
    let mut config = SamplerConfig::new(200, AnnealingSchedule::linear(10).unwrap(), 1);
    config.ess_fraction = 0.999;
    let out = aisel_run(&toy, &pi0, &config, &mut ChaCha8Rng::seed_from_u64(404)).unwrap();
    assert!(out.report.resample_count > 0);
    assert!(matches!(closed_form_variance(&out.ensemble, |x| x[0]), Err(aisel::AiselError::ContractViolation(_))));
}
