//! Twin score/Fisher networks and their aggregation into a pseudo
//! maximum-likelihood estimate.
//!
//! Each datum `d_i` is mapped to a score `t_i` and a Fisher matrix
//! `F_i = L_i L_i^T`, where `L_i` is lower triangular with a softplus
//! diagonal. Over a set,
//!
//! ```text
//! t = sum_i t_i,   F = sum_i F_i,   theta_hat = F^{-1} t + c
//! ```
//!
//! and the networks are trained on the Gaussian negative log-likelihood
//! `1/2 (theta - theta_hat)^T F (theta - theta_hat) - 1/2 ln det F`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::genmodels::SetDataset;
use crate::linalg::{cholesky_guarded, dot, norm, packed_index, packed_len, LowerTri, Matrix};
use crate::math;
use crate::nn::{Activation, DenseNet, InputScaling, Tape};
use crate::rng::Rng;
use crate::train::{Parameterized, SetObjective};

/// Condition estimates above this are rejected by [`mle_estimate`].
pub const MAX_CONDITION: f64 = 1e14;

/// Smallest diagonal entry a Cholesky factor may take after softplus.
pub(crate) const MIN_DIAG: f64 = 1.5e-154;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Symmetric positive-definite matrix held as its Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    chol: LowerTri,
}

impl FisherMatrix {
    pub fn from_chol(chol: LowerTri) -> Result<Self> {
        if chol.diag().all(|d| d > 0.0 && d.is_finite()) {
            Ok(Self { chol })
        } else {
            Err(Error::NotPositiveDefinite)
        }
    }

    /// Factorizes a dense symmetric matrix (jitter retry included).
    pub fn from_dense(f: &Matrix) -> Result<Self> {
        Ok(Self {
            chol: cholesky_guarded(f)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }

    pub fn chol(&self) -> &LowerTri {
        &self.chol
    }

    pub fn to_dense(&self) -> Matrix {
        self.chol.gram()
    }

    pub fn log_det(&self) -> f64 {
        self.chol.log_det_gram()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> Matrix {
        self.chol.inverse_gram()
    }

    pub fn condition_estimate(&self) -> f64 {
        self.chol.condition_estimate()
    }
}

/// Builds `L` from `n_p (n_p + 1) / 2` raw outputs, row-major lower triangle,
/// with `softplus` on the diagonal.
pub fn cholesky_from_raw(raw: &[f64], n_p: usize) -> Result<FisherMatrix> {
    ensure_len("raw Cholesky entries", packed_len(n_p), raw.len())?;
    let mut data = raw.to_vec();
    for i in 0..n_p {
        let k = packed_index(i, i);
        data[k] = math::softplus(raw[k]).max(MIN_DIAG);
    }
    FisherMatrix::from_chol(LowerTri::from_packed(n_p, data)?)
}

/// Order of embeddings under the lexicographic total order of their
/// `(score, packed factor)` entries. Summing in this order makes aggregation
/// independent of how the input was enumerated.
fn canonical_order<K: AsRef<[f64]>>(keys: &[(K, K)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| {
        math::cmp_slices(keys[a].0.as_ref(), keys[b].0.as_ref())
            .then_with(|| math::cmp_slices(keys[a].1.as_ref(), keys[b].1.as_ref()))
    });
    idx
}

/// Sums per-datum scores and Fishers in canonical order.
pub fn aggregate(
    embeddings: &[(ScoreVector, FisherMatrix)],
) -> Result<(ScoreVector, FisherMatrix)> {
    let first = embeddings.first().ok_or(Error::EmptyAggregation)?;
    let n_p = first.0 .0.len();
    let keys: Vec<(&[f64], &[f64])> = embeddings
        .iter()
        .map(|(t, f)| (t.as_slice(), f.chol.packed()))
        .collect();
    for (t, f) in embeddings {
        ensure_len("score length", n_p, t.0.len())?;
        ensure_len("Fisher dimension", n_p, f.dim())?;
    }
    let mut t = vec![0.0; n_p];
    let mut f = Matrix::zeros(n_p, n_p);
    for i in canonical_order(&keys) {
        let (ti, fi) = &embeddings[i];
        for (a, b) in t.iter_mut().zip(&ti.0) {
            *a += b;
        }
        fi.chol.add_gram_into(&mut f);
    }
    Ok((ScoreVector(t), FisherMatrix::from_dense(&f)?))
}

/// `F^{-1} t + c` through the Cholesky factor.
pub fn mle_estimate(t: &ScoreVector, f: &FisherMatrix, c: &[f64]) -> Result<Vec<f64>> {
    mle_estimate_with_limit(t, f, c, MAX_CONDITION)
}

pub fn mle_estimate_with_limit(
    t: &ScoreVector,
    f: &FisherMatrix,
    c: &[f64],
    max_condition: f64,
) -> Result<Vec<f64>> {
    ensure_len("score length", f.dim(), t.0.len())?;
    ensure_len("fiducial offset", f.dim(), c.len())?;
    let condition = f.condition_estimate();
    if !(condition <= max_condition) {
        return Err(Error::IllConditioned { condition });
    }
    let mut x = f.solve(&t.0);
    for (xi, ci) in x.iter_mut().zip(c) {
        *xi += ci;
    }
    Ok(x)
}

/// `1/2 (theta - theta_hat)^T F (theta - theta_hat) - 1/2 ln det F`.
pub fn fishnets_loss(theta: &[f64], theta_hat: &[f64], f: &FisherMatrix) -> Result<f64> {
    ensure_len("theta", f.dim(), theta.len())?;
    ensure_len("theta_hat", f.dim(), theta_hat.len())?;
    let delta: Vec<f64> = theta.iter().zip(theta_hat).map(|(a, b)| a - b).collect();
    let fd = f.to_dense().mul_vec(&delta);
    Ok(0.5 * dot(&delta, &fd) - 0.5 * f.log_det())
}

/// Output of [`FishnetsModel::summarize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedSummary {
    pub t_nn: ScoreVector,
    pub f_nn: FisherMatrix,
    pub theta_hat: Vec<f64>,
}

/// Architecture of a twin-network model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FishnetsArch {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for FishnetsArch {
    fn default() -> Self {
        Self {
            hidden: vec![50, 50, 50],
            activation: Activation::Swish,
        }
    }
}

/// Twin networks for per-datum score and Fisher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FishnetsModel {
    pub score_net: DenseNet,
    pub fisher_net: DenseNet,
    pub n_p: usize,
    /// Fiducial offset `c` added to `F^{-1} t`.
    pub fiducial: Vec<f64>,
}

impl FishnetsModel {
    pub fn new(
        score_net: DenseNet,
        fisher_net: DenseNet,
        n_p: usize,
        fiducial: Vec<f64>,
    ) -> Result<Self> {
        ensure_len("score network output", n_p, score_net.output_dim())?;
        ensure_len(
            "Fisher network output",
            packed_len(n_p),
            fisher_net.output_dim(),
        )?;
        ensure_len(
            "twin network inputs",
            score_net.input_dim(),
            fisher_net.input_dim(),
        )?;
        ensure_len("fiducial offset", n_p, fiducial.len())?;
        Ok(Self {
            score_net,
            fisher_net,
            n_p,
            fiducial,
        })
    }

    /// Randomly initialized twins with `c = 0`.
    pub fn init(input_dim: usize, n_p: usize, arch: &FishnetsArch, rng: &mut Rng) -> Result<Self> {
        let score_net = DenseNet::mlp(input_dim, &arch.hidden, n_p, arch.activation, rng)?;
        let fisher_net = DenseNet::mlp(
            input_dim,
            &arch.hidden,
            packed_len(n_p),
            arch.activation,
            rng,
        )?;
        Self::new(score_net, fisher_net, n_p, vec![0.0; n_p])
    }

    /// Applies the same fixed input standardization to both networks.
    pub fn with_input_scaling(mut self, scaling: InputScaling) -> Result<Self> {
        self.score_net = self.score_net.with_input_scaling(scaling.clone())?;
        self.fisher_net = self.fisher_net.with_input_scaling(scaling)?;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.score_net.input_dim()
    }

    pub fn embed_datum(&self, d: &[f64]) -> Result<(ScoreVector, FisherMatrix)> {
        let t = self.score_net.forward(d)?;
        let raw = self.fisher_net.forward(d)?;
        Ok((ScoreVector(t), cholesky_from_raw(&raw, self.n_p)?))
    }

    pub fn embed_set<'a, I>(&self, rows: I) -> Result<Vec<(ScoreVector, FisherMatrix)>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        rows.into_iter().map(|d| self.embed_datum(d)).collect()
    }

    /// Row-wise [`embed_datum`](Self::embed_datum) over a data matrix,
    /// evaluated in one batched pass with identical results.
    pub fn embed_matrix(&self, data: &Matrix) -> Result<Vec<(ScoreVector, FisherMatrix)>> {
        ensure_len("datum length", self.score_net.input_dim(), data.cols())?;
        let mut out = Vec::with_capacity(data.rows());
        let (mut ts, mut tf) = (Tape::default(), Tape::default());
        for chunk in data.as_slice().chunks(CHUNK_ROWS * data.cols().max(1)) {
            let rows = chunk.len() / data.cols();
            self.score_net.forward_rows_tape(chunk, rows, &mut ts)?;
            self.fisher_net.forward_rows_tape(chunk, rows, &mut tf)?;
            for i in 0..rows {
                let raw = tf.output_row(i);
                out.push((
                    ScoreVector(ts.output_row(i).to_vec()),
                    cholesky_from_raw(raw, self.n_p)?,
                ));
            }
        }
        Ok(out)
    }

    /// Aggregated score, Fisher and estimate for one set.
    pub fn summarize(&self, data: &Matrix) -> Result<AggregatedSummary> {
        if data.rows() == 0 {
            return Err(Error::EmptyAggregation);
        }
        let embeddings = self.embed_matrix(data)?;
        let (t_nn, f_nn) = aggregate(&embeddings)?;
        let theta_hat = mle_estimate(&t_nn, &f_nn, &self.fiducial)?;
        Ok(AggregatedSummary {
            t_nn,
            f_nn,
            theta_hat,
        })
    }

    pub fn estimate(&self, data: &Matrix) -> Result<Vec<f64>> {
        Ok(self.summarize(data)?.theta_hat)
    }

    pub fn loss_on(&self, set: &SetDataset) -> Result<f64> {
        let s = self.summarize(&set.data)?;
        fishnets_loss(&set.theta, &s.theta_hat, &s.f_nn)
    }
}

impl Parameterized for FishnetsModel {
    fn n_params(&self) -> usize {
        self.score_net.n_params() + self.fisher_net.n_params()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut p = self.score_net.params().to_vec();
        p.extend_from_slice(self.fisher_net.params());
        p
    }

    fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        ensure_len("model parameters", self.n_params(), params.len())?;
        let k = self.score_net.n_params();
        self.score_net.set_params(&params[..k])?;
        self.fisher_net.set_params(&params[k..])
    }
}

/// Rows per forward/backward block; keeps tapes cache-sized.
pub(crate) const CHUNK_ROWS: usize = 128;

/// Reusable per-chunk tapes for [`FishnetsModel`] gradients.
#[derive(Debug, Default)]
pub struct FishnetsScratch {
    score: Vec<Tape>,
    fisher: Vec<Tape>,
}

impl SetObjective for FishnetsModel {
    fn loss(&self, set: &SetDataset) -> Result<f64> {
        self.loss_on(set)
    }

    type Workspace = FishnetsScratch;

    fn loss_and_grad(
        &self,
        set: &SetDataset,
        scale: f64,
        grad: &mut [f64],
        ws: &mut FishnetsScratch,
    ) -> Result<f64> {
        let n_p = self.n_p;
        let n = set.n_data();
        if n == 0 {
            return Err(Error::EmptyAggregation);
        }
        ensure_len("theta", n_p, set.theta.len())?;
        let packed = packed_len(n_p);

        let cols = set.data.cols();
        ensure_len("datum length", self.score_net.input_dim(), cols)?;
        let n_chunks = n.div_ceil(CHUNK_ROWS);
        ws.score.resize_with(n_chunks, Tape::default);
        ws.fisher.resize_with(n_chunks, Tape::default);
        let mut scores = Vec::with_capacity(n * n_p);
        let mut raws = Vec::with_capacity(n * packed);
        for (c, chunk) in set.data.as_slice().chunks(CHUNK_ROWS * cols).enumerate() {
            let rows = chunk.len() / cols;
            self.score_net
                .forward_rows_tape(chunk, rows, &mut ws.score[c])?;
            self.fisher_net
                .forward_rows_tape(chunk, rows, &mut ws.fisher[c])?;
            scores.extend_from_slice(ws.score[c].output());
            raws.extend_from_slice(ws.fisher[c].output());
        }
        let mut factors = raws.clone();
        for l in factors.chunks_exact_mut(packed) {
            for d in 0..n_p {
                let k = packed_index(d, d);
                l[k] = math::softplus(l[k]).max(MIN_DIAG);
            }
        }

        let keys: Vec<(&[f64], &[f64])> = (0..n)
            .map(|i| {
                (
                    &scores[i * n_p..(i + 1) * n_p],
                    &factors[i * packed..(i + 1) * packed],
                )
            })
            .collect();
        let mut t = vec![0.0; n_p];
        let mut f = Matrix::zeros(n_p, n_p);
        for i in canonical_order(&keys) {
            for (a, b) in t.iter_mut().zip(keys[i].0) {
                *a += b;
            }
            LowerTri::from_packed(n_p, keys[i].1.to_vec())?.add_gram_into(&mut f);
        }
        let chol = cholesky_guarded(&f)?;
        let s = chol.solve(&t);
        let u: Vec<f64> = set
            .theta
            .iter()
            .zip(&self.fiducial)
            .map(|(a, c)| a - c)
            .collect();
        let delta: Vec<f64> = u.iter().zip(&s).map(|(a, b)| a - b).collect();
        let loss = 0.5 * dot(&delta, &f.mul_vec(&delta)) - 0.5 * chol.log_det_gram();

        // dL/dF = 1/2 (u u^T - s s^T - F^{-1}),  dL/dt = -delta
        let f_inv = chol.inverse_gram();
        let mut g_f = Matrix::zeros(n_p, n_p);
        for a in 0..n_p {
            for b in 0..n_p {
                g_f[(a, b)] = 0.5 * (u[a] * u[b] - s[a] * s[b] - f_inv[(a, b)]);
            }
        }
        let d_score: Vec<f64> = (0..n)
            .flat_map(|_| delta.iter().map(|d| -d * scale))
            .collect();

        // dL/dL_i = 2 G L_i, lower triangle
        let mut d_raw = vec![0.0; n * packed];
        for ((out, l), raw) in d_raw
            .chunks_exact_mut(packed)
            .zip(factors.chunks_exact(packed))
            .zip(raws.chunks_exact(packed))
        {
            for r in 0..n_p {
                for c in 0..=r {
                    let mut acc = 0.0;
                    for k in c..n_p {
                        acc += g_f[(r, k)] * l[packed_index(k, c)];
                    }
                    let mut v = 2.0 * acc * scale;
                    if r == c {
                        v *= math::sigmoid(raw[packed_index(r, r)]);
                    }
                    out[packed_index(r, c)] = v;
                }
            }
        }
        let (g_score, g_fisher) = grad.split_at_mut(self.score_net.n_params());
        for c in 0..n_chunks {
            let rows = ws.score[c].rows();
            let lo = c * CHUNK_ROWS;
            let up_t = &d_score[lo * n_p..(lo + rows) * n_p];
            let up_f = &d_raw[lo * packed..(lo + rows) * packed];
            self.score_net
                .backward_params(&ws.score[c], up_t, g_score)?;
            self.fisher_net
                .backward_params(&ws.fisher[c], up_f, g_fisher)?;
        }
        Ok(loss)
    }
}

/// Residual norm `|F (theta_hat - c) - t|`, for checking solves.
pub fn solve_residual(t: &ScoreVector, f: &FisherMatrix, theta_hat: &[f64], c: &[f64]) -> f64 {
    let diff: Vec<f64> = theta_hat.iter().zip(c).map(|(a, b)| a - b).collect();
    let ft = f.to_dense().mul_vec(&diff);
    let r: Vec<f64> = ft.iter().zip(&t.0).map(|(a, b)| a - b).collect();
    norm(&r)
}
