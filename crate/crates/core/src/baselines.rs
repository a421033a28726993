//! Deepset baselines: `theta_hat = g(agg_i f(d_i))` with mean or learned
//! softmax aggregation, trained on squared error.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::genmodels::SetDataset;
use crate::linalg::Matrix;
use crate::math;
use crate::nn::{Activation, DenseNet, InputScaling, Tape};
use crate::rng::Rng;
use crate::train::{Parameterized, SetObjective};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SetAggregation {
    Mean,
    /// Component-wise softmax weighting with learnable temperature `beta`.
    Softmax {
        beta: f64,
    },
}

impl SetAggregation {
    pub fn tag(&self) -> &'static str {
        match self {
            SetAggregation::Mean => "mean",
            SetAggregation::Softmax { .. } => "softmax",
        }
    }
}

/// Row indices of `rows` sorted lexicographically.
pub(crate) fn canonical_rows<R: AsRef<[f64]>>(rows: &[R]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| math::cmp_slices(rows[a].as_ref(), rows[b].as_ref()));
    idx
}

/// Mean of the rows, summed in canonical order.
pub fn mean_aggregate<R: AsRef<[f64]>>(embeddings: &[R]) -> Result<Vec<f64>> {
    let dim = embeddings
        .first()
        .ok_or(Error::EmptyAggregation)?
        .as_ref()
        .len();
    let mut out = vec![0.0; dim];
    for i in canonical_rows(embeddings) {
        let e = embeddings[i].as_ref();
        ensure_len("embedding length", dim, e.len())?;
        for (o, v) in out.iter_mut().zip(e) {
            *o += v;
        }
    }
    let n = embeddings.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Softmax-weighted combination per component:
/// `a_k = sum_i w_ik f_ik`, `w_ik = exp(beta f_ik) / sum_l exp(beta f_lk)`.
pub fn softmax_aggregate<R: AsRef<[f64]>>(embeddings: &[R], beta: f64) -> Result<Vec<f64>> {
    Ok(softmax_parts(embeddings, beta)?.0)
}

/// Aggregate plus the normalized weights (`n x dim`, canonical row order
/// preserved by index) needed for gradients.
pub(crate) fn softmax_parts<R: AsRef<[f64]>>(embeddings: &[R], beta: f64) -> Result<(Vec<f64>, Matrix)> {
    let dim = embeddings
        .first()
        .ok_or(Error::EmptyAggregation)?
        .as_ref()
        .len();
    if !beta.is_finite() {
        return Err(Error::Config("softmax temperature must be finite".into()));
    }
    for e in embeddings {
        ensure_len("embedding length", dim, e.as_ref().len())?;
    }
    let order = canonical_rows(embeddings);
    let n = embeddings.len();
    let mut weights = Matrix::zeros(n, dim);
    let mut out = vec![0.0; dim];
    for k in 0..dim {
        let shift = order
            .iter()
            .map(|&i| beta * embeddings[i].as_ref()[k])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut norm = 0.0;
        for &i in &order {
            let w = math::exp(beta * embeddings[i].as_ref()[k] - shift);
            weights[(i, k)] = w;
            norm += w;
        }
        let mut acc = 0.0;
        for &i in &order {
            let w = weights[(i, k)] / norm;
            weights[(i, k)] = w;
            acc += w * embeddings[i].as_ref()[k];
        }
        out[k] = acc;
    }
    Ok((out, weights))
}

/// Backward pass of [`softmax_aggregate`]: given `d loss / d a`, returns
/// `d loss / d f` (same shape as the embeddings) and `d loss / d beta`.
pub(crate) fn softmax_backward<R: AsRef<[f64]>>(
    embeddings: &[R],
    beta: f64,
    out: &[f64],
    weights: &Matrix,
    upstream: &[f64],
) -> (Matrix, f64) {
    let n = embeddings.len();
    let dim = out.len();
    let mut d_f = Matrix::zeros(n, dim);
    let mut d_beta = 0.0;
    for i in 0..n {
        let f = embeddings[i].as_ref();
        for k in 0..dim {
            let w = weights[(i, k)];
            let centered = f[k] - out[k];
            d_f[(i, k)] = upstream[k] * w * (1.0 + beta * centered);
            d_beta += upstream[k] * w * f[k] * centered;
        }
    }
    (d_f, d_beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepsetArch {
    pub embed_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub global_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for DeepsetArch {
    fn default() -> Self {
        Self {
            embed_hidden: vec![64, 64],
            embed_dim: 64,
            global_hidden: vec![128, 128, 128],
            activation: Activation::Swish,
        }
    }
}

/// Embedding network `f`, aggregation, global network `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepsetModel {
    pub embed_net: DenseNet,
    pub global_net: DenseNet,
    pub aggregation: SetAggregation,
}

impl DeepsetModel {
    pub fn new(
        embed_net: DenseNet,
        global_net: DenseNet,
        aggregation: SetAggregation,
    ) -> Result<Self> {
        ensure_len(
            "global network input",
            embed_net.output_dim(),
            global_net.input_dim(),
        )?;
        Ok(Self {
            embed_net,
            global_net,
            aggregation,
        })
    }

    /// Random initialization; softmax starts at `beta = 1`.
    pub fn init(
        input_dim: usize,
        n_p: usize,
        arch: &DeepsetArch,
        aggregation: SetAggregation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let embed = DenseNet::mlp(
            input_dim,
            &arch.embed_hidden,
            arch.embed_dim,
            arch.activation,
            rng,
        )?;
        let global = DenseNet::mlp(
            arch.embed_dim,
            &arch.global_hidden,
            n_p,
            arch.activation,
            rng,
        )?;
        Self::new(embed, global, aggregation)
    }

    pub fn with_input_scaling(mut self, scaling: InputScaling) -> Result<Self> {
        self.embed_net = self.embed_net.with_input_scaling(scaling)?;
        Ok(self)
    }

    fn aggregate(&self, embeddings: &[&[f64]]) -> Result<Vec<f64>> {
        match self.aggregation {
            SetAggregation::Mean => mean_aggregate(embeddings),
            SetAggregation::Softmax { beta } => softmax_aggregate(embeddings, beta),
        }
    }

    pub fn forward(&self, data: &Matrix) -> Result<Vec<f64>> {
        if data.rows() == 0 {
            return Err(Error::EmptyAggregation);
        }
        let embedded = self.embed_net.forward_batch(data)?;
        let embeddings: Vec<&[f64]> = embedded.iter_rows().collect();
        self.global_net.forward(&self.aggregate(&embeddings)?)
    }
}

/// `sum_k (theta_hat_k - theta_k)^2`.
pub fn squared_error(theta_hat: &[f64], theta: &[f64]) -> f64 {
    theta_hat
        .iter()
        .zip(theta)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

impl Parameterized for DeepsetModel {
    fn n_params(&self) -> usize {
        let extra = matches!(self.aggregation, SetAggregation::Softmax { .. }) as usize;
        self.embed_net.n_params() + self.global_net.n_params() + extra
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut p = self.embed_net.params().to_vec();
        p.extend_from_slice(self.global_net.params());
        if let SetAggregation::Softmax { beta } = self.aggregation {
            p.push(beta);
        }
        p
    }

    fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        ensure_len("model parameters", self.n_params(), params.len())?;
        let a = self.embed_net.n_params();
        let b = a + self.global_net.n_params();
        self.embed_net.set_params(&params[..a])?;
        self.global_net.set_params(&params[a..b])?;
        if let SetAggregation::Softmax { beta } = &mut self.aggregation {
            *beta = params[b];
        }
        Ok(())
    }
}

impl SetObjective for DeepsetModel {
    fn loss(&self, set: &SetDataset) -> Result<f64> {
        Ok(squared_error(&self.forward(&set.data)?, &set.theta))
    }

    type Workspace = Tape;

    fn loss_and_grad(
        &self,
        set: &SetDataset,
        scale: f64,
        grad: &mut [f64],
        tape: &mut Tape,
    ) -> Result<f64> {
        let n = set.n_data();
        if n == 0 {
            return Err(Error::EmptyAggregation);
        }
        self.embed_net.forward_batch_tape(&set.data, tape)?;
        let embeddings: Vec<&[f64]> = (0..n).map(|i| tape.output_row(i)).collect();
        let (agg, weights) = match self.aggregation {
            SetAggregation::Mean => (mean_aggregate(&embeddings)?, None),
            SetAggregation::Softmax { beta } => {
                let (a, w) = softmax_parts(&embeddings, beta)?;
                (a, Some(w))
            }
        };
        let mut global_tape = Tape::default();
        self.global_net.forward_tape(&agg, &mut global_tape)?;
        let theta_hat = global_tape.output();
        ensure_len("theta", theta_hat.len(), set.theta.len())?;
        let loss = squared_error(theta_hat, &set.theta);
        let upstream: Vec<f64> = theta_hat
            .iter()
            .zip(&set.theta)
            .map(|(a, b)| 2.0 * (a - b) * scale)
            .collect();

        let n_embed = self.embed_net.n_params();
        let n_global = self.global_net.n_params();
        let (g_embed, rest) = grad.split_at_mut(n_embed);
        let (g_global, g_beta) = rest.split_at_mut(n_global);
        let d_agg = self
            .global_net
            .backward(&global_tape, &upstream, g_global)?;

        match (self.aggregation, weights) {
            (SetAggregation::Softmax { beta }, Some(w)) => {
                let (d_f, d_beta) = softmax_backward(&embeddings, beta, &agg, &w, &d_agg);
                g_beta[0] += d_beta;
                self.embed_net
                    .backward_params(tape, d_f.as_slice(), g_embed)?;
            }
            _ => {
                let d_each: Vec<f64> = (0..n)
                    .flat_map(|_| d_agg.iter().map(|d| d / n as f64))
                    .collect();
                self.embed_net.backward_params(tape, &d_each, g_embed)?;
            }
        }
        Ok(loss)
    }
}
