use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kernels::{gemm_acc, gemm_tn_acc};
use super::Activation;
use crate::error::{ensure_len, Error, Result};
use crate::linalg::Matrix;
use crate::rng::{rng_from_seed, Rng};

/// Fixed affine map applied to raw inputs before the first layer:
/// `x' = (x - shift) * scale`. Not trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    /// Per-column standardization fitted on `rows`. Constant columns keep
    /// unit scale.
    pub fn fit<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0.0;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            n += 1.0;
            for j in 0..dim {
                let d = row[j] - mean[j];
                mean[j] += d / n;
                m2[j] += d * (row[j] - mean[j]);
            }
        }
        let scale = m2
            .iter()
            .map(|&s| {
                let sd = if n > 1.0 {
                    libm::sqrt(s / (n - 1.0))
                } else {
                    0.0
                };
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { shift: mean, scale }
    }
}

/// Fully connected network. Hidden layers use the per-layer activation tags;
/// the output layer is linear.
///
/// Parameters live in one flat vector, layer by layer: the weight matrix in
/// input-major order (entry `(o, i)` at `i * out + o`), then the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_scaling: Option<InputScaling>,
}

/// Activations recorded during a forward pass over one or more rows,
/// reused by [`DenseNet::backward`]. Buffers are row-major `rows x width`.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    rows: usize,
    /// Input to each layer (index 0 is the scaled network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    /// Activation derivative at each hidden pre-activation.
    slope: Vec<Vec<f64>>,
}

impl Tape {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Network outputs for every recorded row, concatenated.
    pub fn output(&self) -> &[f64] {
        self.pre.last().map_or(&[], Vec::as_slice)
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        let out = self.output();
        let width = out.len() / self.rows.max(1);
        &out[i * width..(i + 1) * width]
    }
}

impl DenseNet {
    /// Network with zero weights and biases.
    pub fn zeros(layer_sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(
                "a network needs at least input and output sizes, all positive".into(),
            ));
        }
        ensure_len(
            "activations per hidden layer",
            layer_sizes.len() - 2,
            activations.len(),
        )?;
        let n_params = layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum::<usize>();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; n_params],
            input_scaling: None,
        })
    }

    /// Fan-in scaled uniform weights `U(-sqrt(3/fan_in), sqrt(3/fan_in))`,
    /// zero biases.
    pub fn new_seeded(
        layer_sizes: &[usize],
        activations: &[Activation],
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        Self::new_with_rng(layer_sizes, activations, &mut rng)
    }

    pub fn new_with_rng(
        layer_sizes: &[usize],
        activations: &[Activation],
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, activations)?;
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = libm::sqrt(3.0 / fan_in as f64);
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// Same as [`new_seeded`](Self::new_seeded) with a uniform hidden activation.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let acts = vec![activation; hidden.len()];
        Self::new_with_rng(&sizes, &acts, rng)
    }

    pub fn with_input_scaling(mut self, scaling: InputScaling) -> Result<Self> {
        ensure_len("input scaling shift", self.input_dim(), scaling.shift.len())?;
        ensure_len("input scaling scale", self.input_dim(), scaling.scale.len())?;
        self.input_scaling = Some(scaling);
        Ok(self)
    }

    pub fn input_scaling(&self) -> Option<&InputScaling> {
        self.input_scaling.as_ref()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated at construction")
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        ensure_len("network parameters", self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer_offsets(&self, layer: usize) -> (usize, usize) {
        let mut offset = 0;
        for w in self.layer_sizes.windows(2).take(layer) {
            offset += w[0] * w[1] + w[1];
        }
        let (n_in, n_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
        (offset, offset + n_in * n_out)
    }

    /// Weight matrix of `layer` (shape `out x in`).
    pub fn weight(&self, layer: usize) -> Matrix {
        let (w, b) = self.layer_offsets(layer);
        Matrix::from_vec(
            self.layer_sizes[layer],
            self.layer_sizes[layer + 1],
            self.params[w..b].to_vec(),
        )
        .expect("layer slice has matching length")
        .transpose()
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (_, b) = self.layer_offsets(layer);
        &self.params[b..b + self.layer_sizes[layer + 1]]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let (_, b) = self.layer_offsets(layer);
        let n = self.layer_sizes[layer + 1];
        &mut self.params[b..b + n]
    }

    /// Sets the `out x in` weight matrix of `layer`.
    pub fn set_weight(&mut self, layer: usize, w: &Matrix) -> Result<()> {
        let (start, end) = self.layer_offsets(layer);
        ensure_len("layer weight rows", self.layer_sizes[layer + 1], w.rows())?;
        ensure_len("layer weight cols", self.layer_sizes[layer], w.cols())?;
        self.params[start..end].copy_from_slice(w.transpose().as_slice());
        Ok(())
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            Activation::Identity
        } else {
            self.activations[layer]
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape)?;
        Ok(tape.output().to_vec())
    }

    /// Evaluates every row of `batch`; row `i` of the result equals
    /// `forward(batch.row(i))` bit for bit.
    pub fn forward_batch(&self, batch: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::default();
        self.forward_batch_tape(batch, &mut tape)?;
        Matrix::from_vec(batch.rows(), self.output_dim(), tape.output().to_vec())
    }

    /// Forward pass that records what [`backward`](Self::backward) needs.
    /// The tape's buffers are reused across calls.
    pub fn forward_tape(&self, x: &[f64], tape: &mut Tape) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::InputDimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        self.forward_rows(x, 1, tape)
    }

    /// Batched [`forward_tape`](Self::forward_tape); per-row results are
    /// independent of the batch composition.
    pub fn forward_batch_tape(&self, batch: &Matrix, tape: &mut Tape) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::InputDimension {
                expected: self.input_dim(),
                got: batch.cols(),
            });
        }
        self.forward_rows(batch.as_slice(), batch.rows(), tape)
    }

    /// Batched forward over `rows` concatenated inputs.
    pub fn forward_rows_tape(&self, x: &[f64], rows: usize, tape: &mut Tape) -> Result<()> {
        ensure_len("concatenated input rows", rows * self.input_dim(), x.len())?;
        self.forward_rows(x, rows, tape)
    }

    fn forward_rows(&self, x: &[f64], rows: usize, tape: &mut Tape) -> Result<()> {
        let n_layers = self.n_layers();
        tape.rows = rows;
        tape.inputs.resize_with(n_layers, Vec::new);
        tape.pre.resize_with(n_layers, Vec::new);
        tape.slope.resize_with(n_layers, Vec::new);

        let first = &mut tape.inputs[0];
        first.clear();
        match &self.input_scaling {
            Some(s) => {
                for row in x.chunks_exact(self.input_dim()) {
                    first.extend(
                        row.iter()
                            .zip(&s.shift)
                            .zip(&s.scale)
                            .map(|((v, m), k)| (v - m) * k),
                    );
                }
            }
            None => first.extend_from_slice(x),
        }

        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;

            let (before, after) = tape.inputs.split_at_mut(l + 1);
            let input = &before[l];
            let z = &mut tape.pre[l];
            z.clear();
            for _ in 0..rows {
                z.extend_from_slice(b);
            }
            gemm_acc(input, rows, n_in, w, n_out, z);
            if let Some(next) = after.first_mut() {
                let act = self.activation_of(l);
                let slope = &mut tape.slope[l];
                next.clear();
                slope.clear();
                for &v in z.iter() {
                    let (a, d) = act.apply_with_derivative(v);
                    next.push(a);
                    slope.push(d);
                }
            }
        }
        Ok(())
    }

    /// Reverse pass for the tape of the last forward call. `upstream` holds
    /// `d loss / d output` for every recorded row. Adds `d loss / d params`
    /// into `grads` and returns `d loss / d x` (rows concatenated) with
    /// respect to the raw, unscaled input.
    pub fn backward(&self, tape: &Tape, upstream: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        self.backward_impl(tape, upstream, grads, true)
    }

    /// [`backward`](Self::backward) without the input gradient.
    pub fn backward_params(&self, tape: &Tape, upstream: &[f64], grads: &mut [f64]) -> Result<()> {
        self.backward_impl(tape, upstream, grads, false).map(|_| ())
    }

    fn backward_impl(
        &self,
        tape: &Tape,
        upstream: &[f64],
        grads: &mut [f64],
        want_input_grad: bool,
    ) -> Result<Vec<f64>> {
        let rows = tape.rows;
        ensure_len(
            "upstream gradient",
            rows * self.output_dim(),
            upstream.len(),
        )?;
        ensure_len("gradient buffer", self.params.len(), grads.len())?;
        let n_layers = self.n_layers();
        if tape.pre.len() != n_layers {
            return Err(Error::Shape {
                context: "tape layers",
                expected: n_layers,
                got: tape.pre.len(),
            });
        }

        let mut delta = upstream.to_vec();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }

        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            if self.activation_of(l) != Activation::Identity {
                for (d, &s) in delta.iter_mut().zip(&tape.slope[l]) {
                    *d *= s;
                }
            }
            let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for row in delta.chunks_exact(n_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            gemm_tn_acc(&tape.inputs[l], rows, n_in, &delta, n_out, gw);
            if l == 0 && !want_input_grad {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut wt = vec![0.0; n_in * n_out];
            for (i, col) in w.chunks_exact(n_out).enumerate() {
                for (o, &v) in col.iter().enumerate() {
                    wt[o * n_in + i] = v;
                }
            }
            let mut next = vec![0.0; rows * n_in];
            gemm_acc(&delta, rows, n_out, &wt, n_in, &mut next);
            delta = next;
        }
        if !want_input_grad {
            return Ok(Vec::new());
        }
        if let Some(s) = &self.input_scaling {
            for row in delta.chunks_exact_mut(self.input_dim()) {
                for (d, k) in row.iter_mut().zip(&s.scale) {
                    *d *= k;
                }
            }
        }
        Ok(delta)
    }

    /// Gradient of `upstream . forward(x)` with respect to every parameter.
    pub fn gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape)?;
        let mut grads = vec![0.0; self.params.len()];
        self.backward(&tape, upstream, &mut grads)?;
        Ok(grads)
    }
}
