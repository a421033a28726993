//! Calibration statistics: one-sample KS against Uniform(0,1) and
//! probability-integral-transform values under a box-truncated Gaussian.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::{self, normal_interval, normal_pdf};

/// Minimum number of samples accepted by [`ks_test`].
pub const KS_MIN_SAMPLES: usize = 8;

/// Posterior mass inside the prior box below which a PIT record is flagged.
pub const MIN_BOX_MASS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0,1).
pub fn ks_test(samples: &[f64]) -> Result<KsResult> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: KS_MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if let Some((index, &value)) = samples
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::SampleOutOfRange { index, value });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = (i + 1) as f64 / n - x;
            let below = x - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_survival(math::sqrt(n) * statistic),
        n: sorted.len(),
    })
}

/// `P(K > lambda)` for the limiting Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small lambda
        let pi = core::f64::consts::PI;
        let c = pi * pi / (8.0 * lambda * lambda);
        let sum: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                math::exp(-m * m * c)
            })
            .sum();
        let cdf = math::sqrt(2.0 * pi) / lambda * sum;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = math::exp(-2.0 * kf * kf * lambda * lambda);
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Gaussian `N(mean, cov)` restricted to an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussian {
    mean: Vec<f64>,
    cov: Matrix,
    bounds: Vec<(f64, f64)>,
    mass: f64,
}

/// Outcome of a PIT evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PitRecord {
    Values(Vec<f64>),
    /// Posterior mass in the box was below [`MIN_BOX_MASS`].
    Degenerate {
        mass: f64,
    },
}

const GL_NODES: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_8,
    0.755_404_408_355_003,
    0.865_631_202_387_831_8,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_1,
];
const PANELS: usize = 48;
/// Standardized half-width beyond which the Gaussian density is ignored.
const Z_CUT: f64 = 9.0;

/// Composite 16-point Gauss-Legendre on `[a, b]`.
fn integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for p in 0..PANELS {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            acc += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += acc * half;
    }
    total
}

impl TruncatedGaussian {
    /// Supports one and two dimensions.
    pub fn new(mean: Vec<f64>, cov: Matrix, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || n > 2 {
            return Err(Error::Unsupported(
                "truncated Gaussian CDF needs dimension 1 or 2",
            ));
        }
        if cov.rows() != n || cov.cols() != n || bounds.len() != n {
            return Err(Error::Shape {
                context: "truncated Gaussian",
                expected: n,
                got: cov.rows(),
            });
        }
        if (0..n).any(|i| !(cov[(i, i)] > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        let mut tg = Self {
            mean,
            cov,
            bounds,
            mass: 1.0,
        };
        let mass = tg.joint_below(0, tg.bounds[0].1);
        tg.mass = mass;
        Ok(tg)
    }

    pub fn box_mass(&self) -> f64 {
        self.mass
    }

    /// `P(x_axis <= t, x in box)` without renormalization.
    fn joint_below(&self, axis: usize, t: f64) -> f64 {
        let (lo, hi) = self.bounds[axis];
        let t = t.min(hi);
        if t <= lo {
            return 0.0;
        }
        let mu = self.mean[axis];
        let sd = math::sqrt(self.cov[(axis, axis)]);
        if self.mean.len() == 1 {
            return normal_interval((lo - mu) / sd, (t - mu) / sd);
        }
        let other = 1 - axis;
        let (olo, ohi) = self.bounds[other];
        let so = math::sqrt(self.cov[(other, other)]);
        let rho = (self.cov[(0, 1)] / (sd * so)).clamp(-1.0, 1.0);
        let cond_sd = so * math::sqrt((1.0 - rho * rho).max(0.0));
        let za = ((lo - mu) / sd).max(-Z_CUT);
        let zb = ((t - mu) / sd).min(Z_CUT);
        let mo = self.mean[other];
        integrate(za, zb, |z| {
            let cm = mo + rho * so * z;
            let inner = if cond_sd > 0.0 {
                normal_interval((olo - cm) / cond_sd, (ohi - cm) / cond_sd)
            } else {
                f64::from(cm >= olo && cm <= ohi)
            };
            normal_pdf(z) * inner
        })
    }

    /// Marginal CDF of coordinate `axis` at `t`, renormalized to the box.
    pub fn marginal_cdf(&self, axis: usize, t: f64) -> f64 {
        if self.mass <= 0.0 {
            return f64::NAN;
        }
        (self.joint_below(axis, t) / self.mass).clamp(0.0, 1.0)
    }
}

/// PIT values of `truth` under `N(mean, cov)` truncated to `bounds`.
pub fn pit_values(
    mean: &[f64],
    cov: &Matrix,
    bounds: &[(f64, f64)],
    truth: &[f64],
) -> Result<PitRecord> {
    let tg = TruncatedGaussian::new(mean.to_vec(), cov.clone(), bounds.to_vec())?;
    if tg.box_mass() < MIN_BOX_MASS {
        return Ok(PitRecord::Degenerate {
            mass: tg.box_mass(),
        });
    }
    Ok(PitRecord::Values(
        truth
            .iter()
            .enumerate()
            .map(|(axis, &t)| tg.marginal_cdf(axis, t))
            .collect(),
    ))
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for one sample).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var))
}
