//! Distribution comparison helpers: total-variation distance, categorical
//! sampling, and a parametric multinomial acceptance band.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total-variation distance `0.5 * sum |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Draw one index from probabilities `probs` (assumed to sum to ~1).
pub fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One multinomial sample of size `n` by binomial chaining.
pub fn sample_multinomial<R: Rng>(probs: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining_n = n;
    let mut remaining_p = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if i + 1 == probs.len() || remaining_p <= 0.0 {
            counts[i] = remaining_n;
            break;
        }
        let q = (p / remaining_p).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining_n, q)
            .expect("clamped probability")
            .sample(rng);
        counts[i] = draw;
        remaining_n -= draw;
        remaining_p -= p;
    }
    counts
}

/// Quantile of the TV distance between `target` and a multinomial sample of
/// size `n` drawn from it, estimated from `boot` parametric draws. This is
/// the sampling-noise acceptance band for equivariance checks.
pub fn multinomial_tv_band<R: Rng>(
    target: &[f64],
    n: u64,
    boot: usize,
    quantile: f64,
    rng: &mut R,
) -> f64 {
    let mut tvs: Vec<f64> = (0..boot)
        .map(|_| {
            let counts = sample_multinomial(target, n, rng);
            let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            tv_distance(&emp, target)
        })
        .collect();
    tvs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((boot as f64 - 1.0) * quantile).round() as usize;
    tvs[idx.min(boot - 1)]
}

/// Band-estimation controls for equivariance comparisons.
#[derive(Debug, Clone)]
pub struct BandOptions {
    pub bootstrap_samples: usize,
    pub quantile: f64,
    pub seed: u64,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            bootstrap_samples: 500,
            quantile: 0.95,
            seed: 0,
        }
    }
}

/// Empirical-vs-target comparison of one checkpoint distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionComparison {
    pub time: f64,
    pub counts: Vec<u64>,
    pub empirical: Vec<f64>,
    pub target: Vec<f64>,
    /// Total-variation distance between empirical and target.
    pub tv: f64,
    /// Multinomial sampling band at the configured quantile.
    pub band: f64,
    /// `tv <= band`.
    pub pass: bool,
}

impl DistributionComparison {
    pub fn from_counts<R: Rng>(
        time: f64,
        counts: Vec<u64>,
        target: Vec<f64>,
        boot: usize,
        quantile: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let tv = tv_distance(&empirical, &target);
        let band = multinomial_tv_band(&target, n, boot, quantile, rng);
        Ok(Self {
            time,
            counts,
            empirical,
            target,
            tv,
            band,
            pass: tv <= band,
        })
    }
}
