//! Linear regression `y = m x + b + eps`, `eps ~ N(0, sigma^2)`, with its exact
//! score and Fisher information.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{DatasetMeta, Generator, SetDataset};
use crate::error::{ensure_len, Error, Result};
use crate::fishnets::{FisherMatrix, ScoreVector};
use crate::linalg::{cholesky_guarded, Matrix};
use crate::math;
use crate::rng::{rng_from_seed, Rng};

/// Sampling prior for `(m, b)` together with the Gaussian prior terms that
/// enter the analytic score and Fisher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinRegPrior {
    /// Mean of the Gaussian that `theta` is drawn from.
    pub theta_mean: Vec<f64>,
    /// Per-component standard deviation of that Gaussian.
    pub theta_std: Vec<f64>,
    /// `mu_p` in the prior score term.
    pub mu_p: Vec<f64>,
    /// `C_p^{-1}`, added once to the Fisher matrix.
    pub prior_precision: Matrix,
    pub x_range: (f64, f64),
    pub sigma_range: (f64, f64),
    /// Expansion point of the score.
    pub theta_fid: Vec<f64>,
}

impl Default for LinRegPrior {
    fn default() -> Self {
        Self {
            theta_mean: vec![0.0, 0.0],
            theta_std: vec![10.0, 10.0],
            mu_p: vec![0.0, 0.0],
            prior_precision: Matrix::identity(2),
            x_range: (0.0, 10.0),
            sigma_range: (1.0, 10.0),
            theta_fid: vec![0.0, 0.0],
        }
    }
}

impl LinRegPrior {
    pub fn validate(&self) -> Result<()> {
        ensure_len("theta_mean", 2, self.theta_mean.len())?;
        ensure_len("theta_std", 2, self.theta_std.len())?;
        ensure_len("mu_p", 2, self.mu_p.len())?;
        ensure_len("theta_fid", 2, self.theta_fid.len())?;
        ensure_len("prior_precision rows", 2, self.prior_precision.rows())?;
        ensure_len("prior_precision cols", 2, self.prior_precision.cols())?;
        if !(self.x_range.0 <= self.x_range.1) || !(self.sigma_range.0 <= self.sigma_range.1) {
            return Err(Error::Config("ranges must satisfy lo <= hi".into()));
        }
        if !(self.sigma_range.0 > 0.0) {
            return Err(Error::Config("noise scale must be positive".into()));
        }
        cholesky_guarded(&self.prior_precision).map(|_| ())
    }
}

/// Test-time covariate/noise shift: `sigma = loc + Exp(rate)` truncated at
/// `sigma_max`, `x ~ U(x_range)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustnessShift {
    pub n_data: usize,
    pub sigma_loc: f64,
    pub sigma_rate: f64,
    pub sigma_max: f64,
    pub x_range: (f64, f64),
}

impl Default for RobustnessShift {
    fn default() -> Self {
        Self {
            n_data: 850,
            sigma_loc: 3.5,
            sigma_rate: 1.0,
            sigma_max: 10.0,
            x_range: (0.0, 3.0),
        }
    }
}

impl RobustnessShift {
    /// Inverse-CDF draw from the shifted exponential truncated to
    /// `[sigma_loc, sigma_max]`.
    pub fn sample_sigma(&self, rng: &mut Rng) -> f64 {
        let width = self.sigma_max - self.sigma_loc;
        let mass = -math::expm1(-self.sigma_rate * width);
        let u: f64 = rng.random();
        let s = -math::ln_1p(-u * mass) / self.sigma_rate;
        self.sigma_loc + s.min(width)
    }
}

/// Mean of `Exp(rate)` truncated to `[0, width]`.
pub fn truncated_exp_mean(rate: f64, width: f64) -> f64 {
    let tail = math::exp(-rate * width);
    1.0 / rate - width * tail / (1.0 - tail)
}

fn uniform(lo: f64, hi: f64, rng: &mut Rng) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new(lo, hi).expect("lo < hi checked").sample(rng)
    }
}

pub fn sample_linreg_theta(prior: &LinRegPrior, rng: &mut Rng) -> Vec<f64> {
    prior
        .theta_mean
        .iter()
        .zip(&prior.theta_std)
        .map(|(&m, &s)| {
            if s > 0.0 {
                Normal::new(m, s).expect("finite std").sample(rng)
            } else {
                m
            }
        })
        .collect()
}

fn linreg_rows<F, G>(
    theta: &[f64],
    n_data: usize,
    rng: &mut Rng,
    mut draw_x: F,
    mut draw_sigma: G,
) -> Matrix
where
    F: FnMut(&mut Rng) -> f64,
    G: FnMut(&mut Rng) -> f64,
{
    let (m, b) = (theta[0], theta[1]);
    let mut data = Vec::with_capacity(3 * n_data);
    for _ in 0..n_data {
        let x = draw_x(rng);
        let sigma = draw_sigma(rng);
        let eps: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma;
        data.extend_from_slice(&[m * x + b + eps, x, sigma * sigma]);
    }
    Matrix::from_vec(n_data, 3, data).expect("three columns per row")
}

/// Draws `theta` from the prior, then `n_data` rows `(y, x, sigma^2)`.
pub fn simulate_linreg(prior: &LinRegPrior, n_data: usize, seed: u64) -> Result<SetDataset> {
    let mut rng = rng_from_seed(seed);
    let theta = sample_linreg_theta(prior, &mut rng);
    simulate_linreg_with_rng(prior, theta, n_data, seed, &mut rng)
}

/// Rows `(y, x, sigma^2)` at a fixed `theta`.
pub fn simulate_linreg_at(
    prior: &LinRegPrior,
    theta: &[f64],
    n_data: usize,
    seed: u64,
) -> Result<SetDataset> {
    let mut rng = rng_from_seed(seed);
    simulate_linreg_with_rng(prior, theta.to_vec(), n_data, seed, &mut rng)
}

fn simulate_linreg_with_rng(
    prior: &LinRegPrior,
    theta: Vec<f64>,
    n_data: usize,
    seed: u64,
    rng: &mut Rng,
) -> Result<SetDataset> {
    ensure_len("linear regression theta", 2, theta.len())?;
    if n_data == 0 {
        return Err(Error::Config("n_data must be at least 1".into()));
    }
    let (xl, xh) = prior.x_range;
    let (sl, sh) = prior.sigma_range;
    let data = linreg_rows(
        &theta,
        n_data,
        rng,
        |r| uniform(xl, xh, r),
        |r| uniform(sl, sh, r),
    );
    Ok(SetDataset::new(
        data,
        theta,
        DatasetMeta {
            generator: Generator::LinearRegression,
            seed,
            acceptance_rate: None,
        },
    ))
}

/// A set under the shifted test distribution, `theta` drawn from `prior`.
pub fn simulate_robustness_test(
    prior: &LinRegPrior,
    shift: &RobustnessShift,
    seed: u64,
) -> Result<SetDataset> {
    if !(shift.sigma_loc < shift.sigma_max) || !(shift.sigma_rate > 0.0) {
        return Err(Error::Config(
            "robustness noise distribution is degenerate".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let theta = sample_linreg_theta(prior, &mut rng);
    let (xl, xh) = shift.x_range;
    let data = linreg_rows(
        &theta,
        shift.n_data,
        &mut rng,
        |r| uniform(xl, xh, r),
        |r| shift.sample_sigma(r),
    );
    Ok(SetDataset::new(
        data,
        theta,
        DatasetMeta {
            generator: Generator::RobustnessShift,
            seed,
            acceptance_rate: None,
        },
    ))
}

/// Exact score at `theta_fid` and Fisher matrix, prior terms included once.
/// Rows are `(y, x, sigma^2)`; an empty matrix yields the prior terms alone.
pub fn linreg_score_fisher_dense(rows: &Matrix, prior: &LinRegPrior) -> Result<(Vec<f64>, Matrix)> {
    if rows.rows() > 0 {
        ensure_len("linear regression features", 3, rows.cols())?;
    }
    let (m_fid, b_fid) = (prior.theta_fid[0], prior.theta_fid[1]);
    let mut t = [0.0f64; 2];
    let (mut fxx, mut fx, mut f1) = (0.0f64, 0.0f64, 0.0f64);
    for (i, row) in rows.iter_rows().enumerate() {
        let (y, x, var) = (row[0], row[1], row[2]);
        if !(var > 0.0) {
            return Err(Error::InvalidNoise {
                row: i,
                variance: var,
            });
        }
        let w = 1.0 / var;
        let r = y - (m_fid * x + b_fid);
        t[0] += w * x * r;
        t[1] += w * r;
        fxx += w * x * x;
        fx += w * x;
        f1 += w;
    }
    // prior score C_p^{-1} (mu_p - theta_fid)
    let d = [prior.mu_p[0] - m_fid, prior.mu_p[1] - b_fid];
    let t0 = prior.prior_precision.mul_vec(&d);
    let score = vec![t[0] + t0[0], t[1] + t0[1]];
    let mut fisher = Matrix::from_vec(2, 2, vec![fxx, fx, fx, f1]).expect("2x2");
    fisher.add_assign(&prior.prior_precision);
    Ok((score, fisher))
}

/// [`linreg_score_fisher_dense`] with the Fisher stored as its Cholesky factor.
pub fn linreg_score_fisher(
    set: &SetDataset,
    prior: &LinRegPrior,
) -> Result<(ScoreVector, FisherMatrix)> {
    let (t, f) = linreg_score_fisher_dense(&set.data, prior)?;
    Ok((ScoreVector(t), FisherMatrix::from_dense(&f)?))
}

/// `theta_fid + F^{-1} t`, exact for this model.
pub fn linreg_mle(set: &SetDataset, prior: &LinRegPrior) -> Result<Vec<f64>> {
    let (t, f) = linreg_score_fisher(set, prior)?;
    crate::fishnets::mle_estimate(&t, &f, &prior.theta_fid)
}
