use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub median: f64,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub ci_low: f64,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub ci_high: f64,
}

/// Linear-interpolation percentile of sorted values, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bootstrap the mean of `scores`.
///
/// Resample `s` draws `scores.len()` indices with replacement from a
/// ChaCha8 generator seeded with `seed` on stream `s`, so each resample is
/// independent of thread scheduling. Reports the median and the central
/// `confidence`% interval of the resample means.
pub fn bootstrap_aggregate(scores: &[f64], samples: usize, confidence: f64, seed: u64) -> Aggregate {
    assert!(!scores.is_empty(), "bootstrap needs at least one score");
    assert!(samples > 0, "bootstrap needs at least one resample");
    let n = scores.len();
    let mut means: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let sum: f64 = (0..n).map(|_| scores[rng.random_range(0..n)]).sum();
            sum / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence / 100.0) / 2.0;
    Aggregate {
        median: percentile(&means, 0.5),
        ci_low: percentile(&means, tail),
        ci_high: percentile(&means, 1.0 - tail),
    }
}
