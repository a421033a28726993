//! Binomial measurement model for noisy edge association strengths.

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, Rng};

/// Distribution of the number of coin tosses `N` per edge measurement.
/// Each range is inclusive; a mixture picks one range uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TossCount {
    pub ranges: Vec<(u64, u64)>,
}

impl TossCount {
    /// `N ~ U{20, ..., 200}`.
    pub fn training() -> Self {
        Self {
            ranges: alloc::vec![(20, 200)],
        }
    }

    /// Equal mixture of `U{20, ..., 50}` and `U{170, ..., 200}`.
    pub fn extremes() -> Self {
        Self {
            ranges: alloc::vec![(20, 50), (170, 200)],
        }
    }

    pub fn max(&self) -> u64 {
        self.ranges.iter().map(|r| r.1).max().unwrap_or(1)
    }

    pub fn sample(&self, rng: &mut Rng) -> u64 {
        let (lo, hi) = if self.ranges.len() == 1 {
            self.ranges[0]
        } else {
            self.ranges[rng.random_range(0..self.ranges.len())]
        };
        rng.random_range(lo..=hi)
    }
}

/// One noisy measurement `(p_hat, N)` of an association strength `p_true`.
pub fn simulate_noisy_edge(p_true: f64, tosses: &TossCount, rng: &mut Rng) -> (f64, u64) {
    let n = tosses.sample(rng);
    let p = p_true.clamp(0.0, 1.0);
    let successes = Binomial::new(n, p).expect("p in [0, 1]").sample(rng);
    (successes as f64 / n as f64, n)
}

/// Measures each strength in `p_true` once with a stream seeded by `seed`.
pub fn simulate_noisy_edges(p_true: &[f64], tosses: &TossCount, seed: u64) -> Vec<(f64, u64)> {
    let mut rng = rng_from_seed(seed);
    p_true
        .iter()
        .map(|&p| simulate_noisy_edge(p, tosses, &mut rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_strength_is_never_observed() {
        let out = simulate_noisy_edges(&[0.0; 1000], &TossCount::training(), 4);
        assert!(out.iter().all(|&(p, _)| p == 0.0));
    }

    #[test]
    fn toss_counts_stay_in_support() {
        let mut rng = rng_from_seed(1);
        let train = TossCount::training();
        let test = TossCount::extremes();
        let mut saw_low = false;
        let mut saw_high = false;
        for _ in 0..10_000 {
            let n = train.sample(&mut rng);
            assert!((20..=200).contains(&n));
            let m = test.sample(&mut rng);
            assert!((20..=50).contains(&m) || (170..=200).contains(&m));
            saw_low |= m <= 50;
            saw_high |= m >= 170;
        }
        assert!(saw_low && saw_high);
    }

    #[test]
    fn half_strength_mean() {
        let out = simulate_noisy_edges(&[0.5; 100_000], &TossCount::training(), 8);
        let mean = out.iter().map(|o| o.0).sum::<f64>() / out.len() as f64;
        assert!((mean - 0.5).abs() < 0.005);
        assert!(out.iter().all(|&(p, _)| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn variance_at_fixed_toss_count() {
        let fixed = TossCount {
            ranges: alloc::vec![(40, 40)],
        };
        let p = 0.3;
        let out = simulate_noisy_edges(&[p; 50_000], &fixed, 21);
        let mean = out.iter().map(|o| o.0).sum::<f64>() / out.len() as f64;
        let var = out.iter().map(|o| (o.0 - mean).powi(2)).sum::<f64>() / (out.len() - 1) as f64;
        let expected = p * (1.0 - p) / 40.0;
        // sampling error of a variance estimate ~ sqrt(2/n) relative
        assert!(
            (var - expected).abs() / expected < 0.03,
            "var {var} vs {expected}"
        );
    }
}
