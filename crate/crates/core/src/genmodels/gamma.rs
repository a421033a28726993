//! Hierarchical Gamma population model with optional censorship.
//!
//! ```text
//! gamma_i ~ Gamma(shape = mu / Theta, scale = Theta)
//! tau_i   ~ U(tau_range)
//! s_i     ~ Poisson(A exp(-tau_i / gamma_i))
//! ```
//!
//! Rows are `(tau_i, s_i)`. With `s_min` set, draws with `s_i < s_min` are
//! discarded and the sampler keeps going until `n_data` rows are accepted.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use super::{DatasetMeta, Generator, SetDataset};
use crate::error::{ensure_len, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaPopConfig {
    pub mu_range: (f64, f64),
    pub theta_scale_range: (f64, f64),
    pub tau_range: (f64, f64),
    pub amplitude: f64,
    pub s_min: Option<u64>,
    pub t_max: f64,
}

impl Default for GammaPopConfig {
    fn default() -> Self {
        Self {
            mu_range: (0.5, 10.0),
            theta_scale_range: (0.1, 1.5),
            tau_range: (0.0, 10.0),
            amplitude: 100.0,
            s_min: Some(5),
            t_max: 10.0,
        }
    }
}

impl GammaPopConfig {
    pub fn uncensored(mut self) -> Self {
        self.s_min = None;
        self
    }

    /// Prior box over `(mu, Theta)`.
    pub fn prior_box(&self) -> Vec<(f64, f64)> {
        vec![self.mu_range, self.theta_scale_range]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: (f64, f64)| r.0 < r.1 && r.0.is_finite() && r.1.is_finite();
        if !ok(self.mu_range) || !ok(self.theta_scale_range) || !ok(self.tau_range) {
            return Err(Error::Config(
                "Gamma model ranges must be finite with lo < hi".into(),
            ));
        }
        if !(self.mu_range.0 > 0.0 && self.theta_scale_range.0 > 0.0) {
            return Err(Error::Config(
                "Gamma mean and scale must be positive".into(),
            ));
        }
        if !(self.amplitude > 0.0) {
            return Err(Error::Config("amplitude must be positive".into()));
        }
        Ok(())
    }
}

/// `(mu, Theta)` uniform over the prior box.
pub fn sample_gamma_theta(config: &GammaPopConfig, rng: &mut Rng) -> Vec<f64> {
    let (ml, mh) = config.mu_range;
    let (tl, th) = config.theta_scale_range;
    vec![rng.random_range(ml..mh), rng.random_range(tl..th)]
}

const CHECK_EVERY: u64 = 100_000;
const MIN_ACCEPTANCE: f64 = 1e-4;

pub fn simulate_gamma_population(
    config: &GammaPopConfig,
    theta: &[f64],
    n_data: usize,
    seed: u64,
) -> Result<SetDataset> {
    config.validate()?;
    ensure_len("Gamma model theta", 2, theta.len())?;
    let (mu, scale) = (theta[0], theta[1]);
    if !(mu > 0.0 && scale > 0.0) {
        return Err(Error::Config(
            "Gamma model needs mu > 0 and Theta > 0".into(),
        ));
    }
    if n_data == 0 {
        return Err(Error::Config("n_data must be at least 1".into()));
    }
    let decay = Gamma::new(mu / scale, scale)
        .map_err(|_| Error::Config("invalid Gamma parameters".into()))?;
    let tau = Uniform::new(config.tau_range.0, config.tau_range.1).expect("validated range");
    let mut rng = rng_from_seed(seed);

    let mut data = Vec::with_capacity(2 * n_data);
    let mut accepted = 0usize;
    let mut attempts = 0u64;
    while accepted < n_data {
        let gamma_i: f64 = decay.sample(&mut rng);
        let tau_i = tau.sample(&mut rng);
        let rate = config.amplitude * math::exp(-tau_i / gamma_i);
        let s_i = if rate > 0.0 {
            Poisson::new(rate)
                .expect("positive finite rate")
                .sample(&mut rng)
        } else {
            0.0
        };
        attempts += 1;
        if config.s_min.map_or(true, |m| s_i >= m as f64) {
            data.extend_from_slice(&[tau_i, s_i]);
            accepted += 1;
        } else if attempts % CHECK_EVERY == 0 {
            let rate = accepted as f64 / attempts as f64;
            if rate < MIN_ACCEPTANCE {
                return Err(Error::InfeasibleCensorship { rate, attempts });
            }
        }
    }
    Ok(SetDataset::new(
        Matrix::from_vec(n_data, 2, data).expect("two columns per row"),
        theta.to_vec(),
        DatasetMeta {
            generator: Generator::GammaPopulation,
            seed,
            acceptance_rate: config.s_min.map(|_| n_data as f64 / attempts as f64),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_parameterization_moments() {
        let (mu, scale) = (3.0, 0.7);
        let g = Gamma::new(mu / scale, scale).unwrap();
        let mut rng = rng_from_seed(17);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - mu).abs() / mu < 0.03, "mean {mean}");
        assert!((var - mu * scale).abs() / (mu * scale) < 0.03, "var {var}");
    }

    #[test]
    fn zero_threshold_matches_uncensored_stream() {
        let censored = GammaPopConfig {
            s_min: Some(0),
            ..Default::default()
        };
        let open = GammaPopConfig::default().uncensored();
        let a = simulate_gamma_population(&censored, &[4.0, 0.5], 300, 9).unwrap();
        let b = simulate_gamma_population(&open, &[4.0, 0.5], 300, 9).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.meta.acceptance_rate, Some(1.0));
    }

    #[test]
    fn censored_rows_respect_threshold() {
        let cfg = GammaPopConfig::default();
        let set = simulate_gamma_population(&cfg, &[1.0, 1.2], 500, 2).unwrap();
        assert_eq!(set.n_data(), 500);
        assert!(set.rows().all(|r| r[1] >= 5.0));
        let rate = set.meta.acceptance_rate.unwrap();
        assert!(rate > 0.0 && rate < 1.0);
    }

    #[test]
    fn impossible_threshold_is_infeasible() {
        let cfg = GammaPopConfig {
            amplitude: 1.0,
            s_min: Some(60),
            ..Default::default()
        };
        let err = simulate_gamma_population(&cfg, &[0.5, 0.1], 10, 1).unwrap_err();
        assert!(matches!(err, Error::InfeasibleCensorship { .. }));
    }
}
