use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::agg::{aggregate_backward, aggregate_forward, AggCache, NeighborAggregation};
use super::Graph;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::{packed_index, Matrix};
use crate::math;
use crate::nn::{Activation, DenseNet, Tape};
use crate::rng::Rng;
use crate::train::Parameterized;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnArch {
    /// Node state width.
    pub hidden: usize,
    pub n_layers: usize,
    pub message_hidden: Vec<usize>,
    /// Message width entering mean/softmax aggregation; for fishnets the
    /// width before the linear map to score and Cholesky entries.
    pub message_width: usize,
    pub update_hidden: Vec<usize>,
    pub activation: Activation,
    pub aggregation: NeighborAggregation,
    pub residual: bool,
}

impl Default for GnnArch {
    fn default() -> Self {
        Self {
            hidden: 16,
            n_layers: 2,
            message_hidden: vec![16],
            message_width: 16,
            update_hidden: vec![16],
            activation: Activation::Elu,
            aggregation: NeighborAggregation::Mean,
            residual: true,
        }
    }
}

/// One message-passing step:
/// `h_v' = [h_v +] update([h_v, agg_{e in N(v)} message([h_src(e), x_e])])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnLayer {
    /// For fishnets aggregation the last layer is the linear map to
    /// `n_p` score entries and `n_p (n_p + 1) / 2` raw Cholesky entries.
    pub message_net: DenseNet,
    pub aggregation: NeighborAggregation,
    pub update_net: DenseNet,
    pub residual: bool,
}

/// Linear encoder, stacked message-passing layers, linear readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub encoder: DenseNet,
    pub layers: Vec<GnnLayer>,
    pub readout: DenseNet,
}

struct LayerTape {
    h_in: Matrix,
    message: Tape,
    messages: Matrix,
    agg_out: Matrix,
    cache: AggCache,
    update: Tape,
}

pub(crate) struct GnnTape {
    encoder: Tape,
    layers: Vec<LayerTape>,
    readout: Tape,
}

impl GnnLayer {
    fn validate(&self, hidden: usize, edge_dim: usize) -> Result<()> {
        ensure_len("message input", hidden + edge_dim, self.message_net.input_dim())?;
        let agg_in = self.message_net.output_dim();
        if let NeighborAggregation::Fishnets { n_p } = self.aggregation {
            ensure_len("fishnets message width", n_p + crate::linalg::packed_len(n_p), agg_in)?;
        }
        ensure_len(
            "update input",
            hidden + self.aggregation.output_dim(agg_in),
            self.update_net.input_dim(),
        )?;
        ensure_len("update output", hidden, self.update_net.output_dim())
    }

    fn n_params(&self) -> usize {
        let beta = matches!(self.aggregation, NeighborAggregation::Softmax { .. }) as usize;
        self.message_net.n_params() + self.update_net.n_params() + beta
    }
}

fn concat_rows(a: &Matrix, a_rows: impl Iterator<Item = usize>, b: &Matrix) -> Matrix {
    let width = a.cols() + b.cols();
    let mut data = Vec::with_capacity(b.rows() * width);
    for (i, r) in a_rows.enumerate() {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(i));
    }
    Matrix::from_vec(b.rows(), width, data).expect("row widths add up")
}

/// Shrinks the final linear map and centers the raw Cholesky diagonal at
/// `softplus^{-1}(1)`, so every per-edge Fisher starts close to the identity.
fn init_fisher_map(net: &mut DenseNet, n_p: usize) {
    const WEIGHT_SCALE: f64 = 0.1;
    let last = net.n_layers() - 1;
    let mut w = net.weight(last);
    w.scale(WEIGHT_SCALE);
    net.set_weight(last, &w).expect("same shape");
    let unit_diag = math::ln(math::expm1(1.0));
    let bias = net.bias_mut(last);
    for i in 0..n_p {
        bias[n_p + packed_index(i, i)] = unit_diag;
    }
}

impl GnnModel {
    pub fn new(encoder: DenseNet, layers: Vec<GnnLayer>, readout: DenseNet, edge_dim: usize) -> Result<Self> {
        let hidden = encoder.output_dim();
        for layer in &layers {
            layer.validate(hidden, edge_dim)?;
        }
        ensure_len("readout input", hidden, readout.input_dim())?;
        Ok(Self {
            encoder,
            layers,
            readout,
        })
    }

    pub fn init(node_dim: usize, edge_dim: usize, n_tasks: usize, arch: &GnnArch, rng: &mut Rng) -> Result<Self> {
        if arch.hidden == 0 || arch.message_width == 0 {
            return Err(Error::Config("graph model widths must be positive".into()));
        }
        let encoder = DenseNet::new_with_rng(&[node_dim, arch.hidden], &[], rng)?;
        let mut layers = Vec::with_capacity(arch.n_layers);
        for _ in 0..arch.n_layers {
            let mut sizes = vec![arch.hidden + edge_dim];
            sizes.extend_from_slice(&arch.message_hidden);
            sizes.push(arch.message_width);
            if let NeighborAggregation::Fishnets { n_p } = arch.aggregation {
                sizes.push(arch.aggregation.message_dim(n_p));
            }
            let acts = vec![arch.activation; sizes.len() - 2];
            let mut message_net = DenseNet::new_with_rng(&sizes, &acts, rng)?;
            if let NeighborAggregation::Fishnets { n_p } = arch.aggregation {
                init_fisher_map(&mut message_net, n_p);
            }
            let agg_dim = arch.aggregation.output_dim(arch.message_width);
            let update_net = DenseNet::mlp(arch.hidden + agg_dim, &arch.update_hidden, arch.hidden, arch.activation, rng)?;
            layers.push(GnnLayer {
                message_net,
                aggregation: arch.aggregation,
                update_net,
                residual: arch.residual,
            });
        }
        let readout = DenseNet::new_with_rng(&[arch.hidden, n_tasks], &[], rng)?;
        Self::new(encoder, layers, readout, edge_dim)
    }

    /// Per-node logits (`n_nodes x n_tasks`).
    pub fn forward(&self, graph: &Graph) -> Result<Matrix> {
        let tape = self.forward_tape(graph)?;
        Matrix::from_vec(graph.n_nodes(), self.readout.output_dim(), tape.readout.output().to_vec())
    }

    pub(crate) fn forward_tape(&self, graph: &Graph) -> Result<GnnTape> {
        let n = graph.n_nodes();
        let hidden = self.encoder.output_dim();
        let mut enc = Tape::default();
        self.encoder.forward_batch_tape(graph.node_features(), &mut enc)?;
        let mut h = Matrix::from_vec(n, hidden, enc.output().to_vec())?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            layer.validate(hidden, graph.edge_features().cols())?;
            let msg_in = concat_rows(&h, graph.sources().iter().copied(), graph.edge_features());
            let mut message = Tape::default();
            layer.message_net.forward_batch_tape(&msg_in, &mut message)?;
            let messages = Matrix::from_vec(graph.n_edges(), layer.message_net.output_dim(), message.output().to_vec())?;
            let (agg_out, cache) = aggregate_forward(&layer.aggregation, &messages, graph.neighborhoods())?;
            let upd_in = concat_rows(&h, 0..n, &agg_out);
            let mut update = Tape::default();
            layer.update_net.forward_batch_tape(&upd_in, &mut update)?;
            let mut next = Matrix::from_vec(n, hidden, update.output().to_vec())?;
            if layer.residual {
                next.add_assign(&h);
            }
            layers.push(LayerTape {
                h_in: core::mem::replace(&mut h, next),
                message,
                messages,
                agg_out,
                cache,
                update,
            });
        }
        let mut readout = Tape::default();
        self.readout.forward_batch_tape(&h, &mut readout)?;
        Ok(GnnTape {
            encoder: enc,
            layers,
            readout,
        })
    }

    pub(crate) fn logits(tape: &GnnTape) -> &[f64] {
        tape.readout.output()
    }

    /// Adds `d loss / d params` for upstream `d loss / d logits` into `grads`.
    pub(crate) fn backward(&self, graph: &Graph, tape: &GnnTape, d_logits: &[f64], grads: &mut [f64]) -> Result<()> {
        ensure_len("gradient buffer", self.n_params(), grads.len())?;
        let n = graph.n_nodes();
        let hidden = self.encoder.output_dim();
        let (g_enc, mut rest) = grads.split_at_mut(self.encoder.n_params());
        let mut g_layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (a, b) = rest.split_at_mut(layer.n_params());
            g_layers.push(a);
            rest = b;
        }
        let g_readout = rest;

        let mut d_h = self.readout.backward(&tape.readout, d_logits, g_readout)?;
        for ((layer, lt), g) in self.layers.iter().zip(&tape.layers).zip(g_layers.iter_mut()).rev() {
            let (g_msg, rest) = g.split_at_mut(layer.message_net.n_params());
            let (g_upd, g_beta) = rest.split_at_mut(layer.update_net.n_params());
            let d_upd_in = layer.update_net.backward(&lt.update, &d_h, g_upd)?;
            let agg_dim = lt.agg_out.cols();
            let width = hidden + agg_dim;
            let mut d_prev = if layer.residual { d_h.clone() } else { vec![0.0; n * hidden] };
            let mut d_agg = Matrix::zeros(n, agg_dim);
            for v in 0..n {
                let row = &d_upd_in[v * width..(v + 1) * width];
                for (a, b) in d_prev[v * hidden..(v + 1) * hidden].iter_mut().zip(&row[..hidden]) {
                    *a += b;
                }
                d_agg.row_mut(v).copy_from_slice(&row[hidden..]);
            }
            let (d_msg, d_beta) = aggregate_backward(
                &layer.aggregation,
                &lt.messages,
                graph.neighborhoods(),
                &lt.agg_out,
                &lt.cache,
                &d_agg,
            );
            if let Some(gb) = g_beta.first_mut() {
                *gb += d_beta;
            }
            let d_msg_in = layer.message_net.backward(&lt.message, d_msg.as_slice(), g_msg)?;
            let in_width = layer.message_net.input_dim();
            for (e, &s) in graph.sources().iter().enumerate() {
                let row = &d_msg_in[e * in_width..e * in_width + hidden];
                for (a, b) in d_prev[s * hidden..(s + 1) * hidden].iter_mut().zip(row) {
                    *a += b;
                }
            }
            debug_assert_eq!(lt.h_in.rows(), n);
            d_h = d_prev;
        }
        self.encoder.backward_params(&tape.encoder, &d_h, g_enc)
    }
}

impl Parameterized for GnnModel {
    fn n_params(&self) -> usize {
        self.encoder.n_params() + self.layers.iter().map(GnnLayer::n_params).sum::<usize>() + self.readout.n_params()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut p = self.encoder.params().to_vec();
        for layer in &self.layers {
            p.extend_from_slice(layer.message_net.params());
            p.extend_from_slice(layer.update_net.params());
            if let NeighborAggregation::Softmax { beta } = layer.aggregation {
                p.push(beta);
            }
        }
        p.extend_from_slice(self.readout.params());
        p
    }

    fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        ensure_len("model parameters", self.n_params(), params.len())?;
        let mut rest = params;
        let mut take = |k: usize| {
            let (a, b) = rest.split_at(k);
            rest = b;
            a
        };
        self.encoder.set_params(take(self.encoder.n_params()))?;
        for layer in &mut self.layers {
            layer.message_net.set_params(take(layer.message_net.n_params()))?;
            layer.update_net.set_params(take(layer.update_net.n_params()))?;
            if let NeighborAggregation::Softmax { beta } = &mut layer.aggregation {
                *beta = take(1)[0];
            }
        }
        self.readout.set_params(take(self.readout.n_params()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    pub(crate) fn random_graph(n: usize, n_edges: usize, seed: u64) -> Graph {
        let mut rng = rng_from_seed(seed);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut ef = Matrix::zeros(0, 2);
        for _ in 0..n_edges {
            src.push(rng.random_range(0..n));
            dst.push(rng.random_range(0..n));
            ef.push_row(&[rng.random::<f64>(), rng.random::<f64>()]).unwrap();
        }
        let x = Graph::summed_edge_features(n, &dst, &ef);
        let labels = Matrix::from_vec(n, 1, (0..n).map(|v| (v % 2) as f64).collect()).unwrap();
        let train: Vec<usize> = (0..n).filter(|v| v % 3 == 0).collect();
        let valid: Vec<usize> = (0..n).filter(|v| v % 3 == 1).collect();
        let test: Vec<usize> = (0..n).filter(|v| v % 3 == 2).collect();
        Graph::new(x, src, dst, ef, labels, train, valid, test).unwrap()
    }

    fn small_arch(aggregation: NeighborAggregation) -> GnnArch {
        GnnArch {
            hidden: 4,
            n_layers: 2,
            message_hidden: vec![5],
            message_width: 3,
            update_hidden: vec![4],
            activation: Activation::Swish,
            aggregation,
            residual: true,
        }
    }

    fn aggs() -> [NeighborAggregation; 3] {
        [
            NeighborAggregation::Mean,
            NeighborAggregation::Softmax { beta: 0.9 },
            NeighborAggregation::Fishnets { n_p: 2 },
        ]
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = random_graph(9, 20, 4);
        for (i, agg) in aggs().into_iter().enumerate() {
            let mut rng = rng_from_seed(100 + i as u64);
            let mut model = GnnModel::init(2, 2, 1, &small_arch(agg), &mut rng).unwrap();
            let w: Vec<f64> = (0..9).map(|v| libm::cos(v as f64)).collect();
            let objective = |m: &GnnModel| crate::linalg::dot(m.forward(&g).unwrap().as_slice(), &w);
            let tape = model.forward_tape(&g).unwrap();
            let mut grads = vec![0.0; model.n_params()];
            model.backward(&g, &tape, &w, &mut grads).unwrap();
            let p0 = model.flat_params();
            let h = 1e-3;
            for k in 0..p0.len() {
                let mut at = |step: f64| {
                    let mut p = p0.clone();
                    p[k] += step;
                    model.set_flat_params(&p).unwrap();
                    objective(&model)
                };
                // fourth-order central stencil
                let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
                let err = (fd - grads[k]).abs() / fd.abs().max(grads[k].abs()).max(1e-3);
                assert!(err < 1e-5, "{} param {k}: fd {fd} analytic {}", agg.tag(), grads[k]);
            }
            model.set_flat_params(&p0).unwrap();
        }
    }

    #[test]
    fn node_permutation_is_equivariant_bitwise() {
        let g = random_graph(10, 30, 8);
        let perm = [3, 7, 0, 9, 1, 4, 8, 2, 6, 5];
        let gp = g.permute_nodes(&perm).unwrap();
        for agg in aggs() {
            let mut rng = rng_from_seed(5);
            let model = GnnModel::init(2, 2, 1, &small_arch(agg), &mut rng).unwrap();
            let a = model.forward(&g).unwrap();
            let b = model.forward(&gp).unwrap();
            for v in 0..10 {
                assert_eq!(a.row(v), b.row(perm[v]), "{}", agg.tag());
            }
        }
    }

    #[test]
    fn zero_layer_model_is_linear_readout() {
        let g = random_graph(6, 10, 1);
        let mut rng = rng_from_seed(2);
        let arch = GnnArch {
            n_layers: 0,
            ..small_arch(NeighborAggregation::Mean)
        };
        let model = GnnModel::init(2, 2, 1, &arch, &mut rng).unwrap();
        let logits = model.forward(&g).unwrap();
        for v in 0..6 {
            let h = model.encoder.forward(g.node_features().row(v)).unwrap();
            assert_eq!(logits.row(v), model.readout.forward(&h).unwrap().as_slice());
        }
    }
}
