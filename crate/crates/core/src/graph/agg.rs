//! Neighborhood aggregations. Every reduction runs in the canonical order of
//! the neighbor messages, so results do not depend on edge enumeration.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::{mean_aggregate, softmax_aggregate, softmax_parts};
use crate::error::{Error, Result};
use crate::fishnets::{aggregate, cholesky_from_raw, mle_estimate_with_limit, FisherMatrix, ScoreVector};
use crate::linalg::{packed_index, packed_len, Matrix};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NeighborAggregation {
    Mean,
    /// Learnable temperature, one per layer.
    Softmax { beta: f64 },
    /// Messages carry `n_p` score entries then the packed raw Cholesky factor.
    Fishnets { n_p: usize },
}

impl NeighborAggregation {
    pub fn tag(&self) -> &'static str {
        match self {
            NeighborAggregation::Mean => "mean",
            NeighborAggregation::Softmax { .. } => "softmax",
            NeighborAggregation::Fishnets { .. } => "fishnets",
        }
    }

    /// Width of the messages this aggregation consumes, given the message
    /// network's output width for mean/softmax.
    pub fn message_dim(&self, message_width: usize) -> usize {
        match self {
            NeighborAggregation::Fishnets { n_p } => n_p + packed_len(*n_p),
            _ => message_width,
        }
    }

    pub fn output_dim(&self, message_width: usize) -> usize {
        match self {
            NeighborAggregation::Fishnets { n_p } => *n_p,
            _ => message_width,
        }
    }
}

/// Mean of the neighbor messages; zero vector of width `dim` when isolated.
pub fn mean_neighborhood_agg(messages: &[&[f64]], dim: usize) -> Result<Vec<f64>> {
    if messages.is_empty() {
        return Ok(vec![0.0; dim]);
    }
    mean_aggregate(messages)
}

/// Component-wise softmax-weighted messages; zero vector when isolated.
pub fn softmax_neighborhood_agg(messages: &[&[f64]], beta: f64, dim: usize) -> Result<Vec<f64>> {
    if messages.is_empty() {
        return Ok(vec![0.0; dim]);
    }
    softmax_aggregate(messages, beta)
}

/// `(sum F_i)^{-1} sum t_i` over neighbor messages `[t_i, raw L_i]`;
/// zero vector when isolated.
pub fn fishnets_neighborhood_agg(messages: &[&[f64]], n_p: usize) -> Result<Vec<f64>> {
    Ok(fishnets_node(messages, n_p)?.0)
}

fn fishnets_node(messages: &[&[f64]], n_p: usize) -> Result<(Vec<f64>, Option<FisherMatrix>)> {
    if messages.is_empty() {
        return Ok((vec![0.0; n_p], None));
    }
    let embeddings = messages
        .iter()
        .map(|m| {
            if m.len() != n_p + packed_len(n_p) {
                return Err(Error::Shape {
                    context: "fishnets message width",
                    expected: n_p + packed_len(n_p),
                    got: m.len(),
                });
            }
            Ok((ScoreVector(m[..n_p].to_vec()), cholesky_from_raw(&m[n_p..], n_p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (t, f) = aggregate(&embeddings)?;
    // no condition limit inside a layer: the Cholesky solve is backward
    // stable, and only a failed factorization is an error here
    let out = mle_estimate_with_limit(&t, &f, &vec![0.0; n_p], f64::INFINITY)?;
    Ok((out, Some(f)))
}

/// Forward values kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct AggCache {
    /// Softmax: normalized weights per edge row (edge-indexed).
    weights: Option<Matrix>,
    /// Fishnets: aggregated Fisher per node (`None` for isolated nodes).
    fishers: Vec<Option<FisherMatrix>>,
}

fn gather<'a>(messages: &'a Matrix, edges: &[usize]) -> Vec<&'a [f64]> {
    edges.iter().map(|&e| messages.row(e)).collect()
}

/// Aggregates edge messages (`n_edges x width`) into per-node outputs.
pub fn aggregate_neighborhoods(
    agg: &NeighborAggregation,
    messages: &Matrix,
    neighborhoods: &[Vec<usize>],
) -> Result<Matrix> {
    Ok(aggregate_forward(agg, messages, neighborhoods)?.0)
}

pub(crate) fn aggregate_forward(
    agg: &NeighborAggregation,
    messages: &Matrix,
    neighborhoods: &[Vec<usize>],
) -> Result<(Matrix, AggCache)> {
    let width = messages.cols();
    let out_dim = match agg {
        NeighborAggregation::Fishnets { n_p } => *n_p,
        _ => width,
    };
    let mut out = Matrix::zeros(neighborhoods.len(), out_dim);
    let mut cache = AggCache::default();
    match *agg {
        NeighborAggregation::Mean => {
            for (v, nb) in neighborhoods.iter().enumerate() {
                let a = mean_neighborhood_agg(&gather(messages, nb), width)?;
                out.row_mut(v).copy_from_slice(&a);
            }
        }
        NeighborAggregation::Softmax { beta } => {
            let mut weights = Matrix::zeros(messages.rows(), width);
            for (v, nb) in neighborhoods.iter().enumerate() {
                if nb.is_empty() {
                    continue;
                }
                let (a, w) = softmax_parts(&gather(messages, nb), beta)?;
                for (i, &e) in nb.iter().enumerate() {
                    weights.row_mut(e).copy_from_slice(w.row(i));
                }
                out.row_mut(v).copy_from_slice(&a);
            }
            cache.weights = Some(weights);
        }
        NeighborAggregation::Fishnets { n_p } => {
            cache.fishers.reserve(neighborhoods.len());
            for (v, nb) in neighborhoods.iter().enumerate() {
                let (a, f) = fishnets_node(&gather(messages, nb), n_p)?;
                out.row_mut(v).copy_from_slice(&a);
                cache.fishers.push(f);
            }
        }
    }
    Ok((out, cache))
}

/// Gradient with respect to the edge messages (and softmax temperature).
pub(crate) fn aggregate_backward(
    agg: &NeighborAggregation,
    messages: &Matrix,
    neighborhoods: &[Vec<usize>],
    out: &Matrix,
    cache: &AggCache,
    upstream: &Matrix,
) -> (Matrix, f64) {
    let width = messages.cols();
    let mut d_msg = Matrix::zeros(messages.rows(), width);
    let mut d_beta = 0.0;
    match *agg {
        NeighborAggregation::Mean => {
            for (v, nb) in neighborhoods.iter().enumerate() {
                let k = nb.len() as f64;
                for &e in nb {
                    for (d, g) in d_msg.row_mut(e).iter_mut().zip(upstream.row(v)) {
                        *d = g / k;
                    }
                }
            }
        }
        NeighborAggregation::Softmax { beta } => {
            let w = cache.weights.as_ref().expect("softmax cache");
            for (v, nb) in neighborhoods.iter().enumerate() {
                let a = out.row(v);
                let g = upstream.row(v);
                for &e in nb {
                    let f = messages.row(e);
                    for k in 0..width {
                        let centered = f[k] - a[k];
                        d_msg[(e, k)] = g[k] * w[(e, k)] * (1.0 + beta * centered);
                        d_beta += g[k] * w[(e, k)] * f[k] * centered;
                    }
                }
            }
        }
        NeighborAggregation::Fishnets { n_p } => {
            for (v, nb) in neighborhoods.iter().enumerate() {
                let Some(f) = &cache.fishers[v] else { continue };
                // o = F^{-1} t;  a = F^{-1} g;  dL/dt_i = a;  dL/dF = -a o^T
                let o = out.row(v);
                let a = f.solve(upstream.row(v));
                for &e in nb {
                    let m = messages.row(e);
                    let raw = &m[n_p..];
                    let d = d_msg.row_mut(e);
                    d[..n_p].copy_from_slice(&a);
                    // dL/dL_i = (G + G^T) L_i with G = -a o^T, lower triangle
                    let l = |i: usize, j: usize| {
                        let k = packed_index(i, j);
                        if i == j {
                            math::softplus(raw[k]).max(crate::fishnets::MIN_DIAG)
                        } else {
                            raw[k]
                        }
                    };
                    for r in 0..n_p {
                        for c in 0..=r {
                            let mut acc = 0.0;
                            for k in c..n_p {
                                acc -= (a[r] * o[k] + o[r] * a[k]) * l(k, c);
                            }
                            if r == c {
                                acc *= math::sigmoid(raw[packed_index(r, r)]);
                            }
                            d[n_p + packed_index(r, c)] = acc;
                        }
                    }
                }
            }
        }
    }
    (d_msg, d_beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Raw Cholesky entry whose softplus equals `v`.
    fn inv_softplus(v: f64) -> f64 {
        libm::log(libm::expm1(v))
    }

    #[test]
    fn ill_conditioned_neighborhood_still_aggregates() {
        // L = diag(1, 1e-9), so F = diag(1, 1e-18): beyond the set estimator's limit
        let m = [2.0, 3e-18, inv_softplus(1.0), 0.0, inv_softplus(1e-9)];
        let out = fishnets_neighborhood_agg(&[&m], 2).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12);
        assert!((out[1] - 3.0).abs() < 1e-6, "{out:?}");
    }

    #[test]
    fn fishnets_two_neighbor_hand_value() {
        let m1 = [1.0, inv_softplus(1.0)];
        let m2 = [9.0, inv_softplus(libm::sqrt(3.0))];
        let out = fishnets_neighborhood_agg(&[&m1, &m2], 1).unwrap();
        assert!((out[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fishnets_single_and_duplicated() {
        let m = [0.7, -1.2, 0.3, 0.4, 1.1];
        let one = fishnets_neighborhood_agg(&[&m], 2).unwrap();
        let f = cholesky_from_raw(&m[2..], 2).unwrap();
        let expected = f.solve(&m[..2]);
        for (a, b) in one.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
        let many = fishnets_neighborhood_agg(&[&m, &m, &m], 2).unwrap();
        for (a, b) in one.iter().zip(&many) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_fisher_returns_score() {
        let m = [0.3, -2.0, inv_softplus(1.0)];
        let m = [m[0], m[1], m[2], 0.0, inv_softplus(1.0)];
        let out = fishnets_neighborhood_agg(&[&m], 2).unwrap();
        assert!((out[0] - 0.3).abs() < 1e-12 && (out[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_nodes_yield_zero() {
        assert_eq!(fishnets_neighborhood_agg(&[], 3).unwrap(), vec![0.0; 3]);
        assert_eq!(mean_neighborhood_agg(&[], 2).unwrap(), vec![0.0; 2]);
        assert_eq!(softmax_neighborhood_agg(&[], 1.0, 2).unwrap(), vec![0.0; 2]);
    }

    #[test]
    fn softmax_neighborhood_values() {
        let a = [0.0];
        let b = [libm::log(3.0)];
        let v = softmax_neighborhood_agg(&[&a, &b], 1.0, 1).unwrap()[0];
        assert!((v - 0.823_959).abs() < 1e-6);
        let single = [4.2, -1.0];
        assert_eq!(softmax_neighborhood_agg(&[&single], 3.0, 2).unwrap(), vec![4.2, -1.0]);
    }

    fn check_backward(agg: NeighborAggregation, width: usize) {
        let n_edges = 7;
        let msgs: Vec<f64> = (0..n_edges * width).map(|i| libm::sin(i as f64 * 1.37) * 0.8).collect();
        let mut messages = Matrix::from_vec(n_edges, width, msgs).unwrap();
        let nbs = vec![vec![0, 3], vec![], vec![1, 2, 4, 5], vec![6]];
        let (out, cache) = aggregate_forward(&agg, &messages, &nbs).unwrap();
        let up_vals: Vec<f64> = (0..out.rows() * out.cols()).map(|i| libm::cos(i as f64)).collect();
        let up = Matrix::from_vec(out.rows(), out.cols(), up_vals).unwrap();
        let (d, d_beta) = aggregate_backward(&agg, &messages, &nbs, &out, &cache, &up);
        let objective = |m: &Matrix, a: &NeighborAggregation| {
            let o = aggregate_neighborhoods(a, m, &nbs).unwrap();
            crate::linalg::dot(o.as_slice(), up.as_slice())
        };
        let h = 1e-6;
        for e in 0..n_edges {
            for k in 0..width {
                let x0 = messages[(e, k)];
                messages.as_mut_slice()[e * width + k] = x0 + h;
                let lp = objective(&messages, &agg);
                messages.as_mut_slice()[e * width + k] = x0 - h;
                let lm = objective(&messages, &agg);
                messages.as_mut_slice()[e * width + k] = x0;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - d[(e, k)]).abs() < 1e-7 * fd.abs().max(1.0), "{} e{e} k{k}: {fd} vs {}", agg.tag(), d[(e, k)]);
            }
        }
        if let NeighborAggregation::Softmax { beta } = agg {
            let lp = objective(&messages, &NeighborAggregation::Softmax { beta: beta + h });
            let lm = objective(&messages, &NeighborAggregation::Softmax { beta: beta - h });
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - d_beta).abs() < 1e-7 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        check_backward(NeighborAggregation::Mean, 3);
        check_backward(NeighborAggregation::Softmax { beta: 0.8 }, 3);
        check_backward(NeighborAggregation::Fishnets { n_p: 2 }, 5);
        check_backward(NeighborAggregation::Fishnets { n_p: 3 }, 9);
    }
}
