//! Ancestor selection for weighted particle systems.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleMethod {
    #[default]
    Systematic,
    Multinomial,
}

impl std::str::FromStr for ResampleMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "systematic" => Ok(Self::Systematic),
            "multinomial" => Ok(Self::Multinomial),
            other => Err(format!("unknown resampling method `{other}`")),
        }
    }
}

/// Draws `count` ancestor indices from normalized `weights`.
///
/// Both schemes are unbiased: index `i` is replicated `count * weights[i]` times
/// in expectation. The output is sorted.
pub fn resample_indices<R: Rng + ?Sized>(
    weights: &[f64],
    count: usize,
    method: ResampleMethod,
    rng: &mut R,
) -> Vec<usize> {
    match method {
        ResampleMethod::Systematic => {
            let u0: f64 = rng.random::<f64>();
            walk_cdf(weights, count, (0..count).map(|k| (k as f64 + u0) / count as f64))
        }
        ResampleMethod::Multinomial => {
            // Sorted uniforms from normalized exponential spacings.
            let mut acc = 0.0;
            let mut points = Vec::with_capacity(count);
            for _ in 0..count {
                acc += exp1(rng);
                points.push(acc);
            }
            let total = acc + exp1(rng);
            walk_cdf(weights, count, points.into_iter().map(|p| p / total))
        }
    }
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the log is finite.
    -(1.0 - rng.random::<f64>()).ln()
}

fn walk_cdf(weights: &[f64], count: usize, sorted_points: impl Iterator<Item = f64>) -> Vec<usize> {
    let last = weights.len() - 1;
    let mut out = Vec::with_capacity(count);
    let mut idx = 0usize;
    let mut cum = weights[0];
    for u in sorted_points {
        while u >= cum && idx < last {
            idx += 1;
            cum += weights[idx];
        }
        // Rounding can leave `cum` a hair below one; never pick a zero-weight tail.
        while weights[idx] == 0.0 && idx > 0 {
            idx -= 1;
        }
        out.push(idx);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_weights_copy_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for method in [ResampleMethod::Systematic, ResampleMethod::Multinomial] {
            let idx = resample_indices(&[1.0, 0.0, 0.0, 0.0], 4, method, &mut rng);
            assert_eq!(idx, vec![0; 4]);
        }
    }

    #[test]
    fn trailing_zero_weight_is_never_chosen() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let idx = resample_indices(&[0.3, 0.7, 0.0], 5, ResampleMethod::Systematic, &mut rng);
            assert!(idx.iter().all(|&i| i < 2));
        }
    }

    #[test]
    fn systematic_uniform_counts() {
        // Uniform weights: each index appears 0, 1 or 2 times; mean count is 1.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 8;
        let reps = 10_000;
        let w = vec![1.0 / m as f64; m];
        let mut totals = vec![0usize; m];
        for _ in 0..reps {
            let idx = resample_indices(&w, m, ResampleMethod::Systematic, &mut rng);
            assert_eq!(idx.len(), m);
            let mut counts = vec![0usize; m];
            for i in idx {
                counts[i] += 1;
            }
            assert!(counts.iter().all(|&c| c <= 2));
            for (t, c) in totals.iter_mut().zip(&counts) {
                *t += c;
            }
        }
        // Per-index count variance is at most 1 for counts in {0,1,2} with mean 1.
        let se = (1.0 / reps as f64).sqrt();
        for t in totals {
            let mean = t as f64 / reps as f64;
            assert!((mean - 1.0).abs() < 3.0 * se, "mean count {mean}");
        }
    }

    #[test]
    fn multinomial_binomial_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 100_000;
        let idx = resample_indices(&[0.7, 0.3], m, ResampleMethod::Multinomial, &mut rng);
        let ones = idx.iter().filter(|&&i| i == 0).count() as f64;
        let sd = (m as f64 * 0.7 * 0.3).sqrt();
        assert!((ones - 70_000.0).abs() < 3.0 * sd, "count {ones}");
    }

    #[test]
    fn systematic_is_unbiased_for_uneven_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = [0.05, 0.45, 0.1, 0.4];
        let m = 7;
        let reps = 20_000;
        let mut totals = [0usize; 4];
        for _ in 0..reps {
            for i in resample_indices(&w, m, ResampleMethod::Systematic, &mut rng) {
                totals[i] += 1;
            }
        }
        for (i, &t) in totals.iter().enumerate() {
            let mean = t as f64 / reps as f64;
            // Systematic counts take one of two adjacent values: variance <= 1/4.
            let se = (0.25 / reps as f64).sqrt();
            assert!((mean - m as f64 * w[i]).abs() < 3.0 * se + 1e-12, "index {i}: {mean}");
        }
    }
}
