//! Synthetic node-classification graphs whose labels are carried by edge
//! association strengths, with an optional Binomial measurement layer.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::edges::{simulate_noisy_edge, TossCount};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::rng::{derive_seed, rng_from_seed};

/// Upper end of the strength support; strengths live in `[0, P_MAX]`.
const P_MAX: f64 = 1.0 - 1e-9;

/// Fraction of isolated nodes above which generation logs a warning.
const ISOLATED_WARN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyGraphConfig {
    pub n_nodes: usize,
    /// Expected in-degree; `round(n_nodes * mean_degree / 2)` node pairs are
    /// linked, each in both directions.
    pub mean_degree: f64,
    /// Binary tasks; task `k` labels `q_v > lo + (k + 1) (hi - lo) / (n_tasks + 1)`.
    pub n_tasks: usize,
    /// Support of the node latent `q_v ~ U(lo, hi)`.
    pub latent_range: (f64, f64),
    /// Standard deviation of edge strengths around the receiving node's latent.
    pub edge_scatter: f64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
}

impl Default for ToyGraphConfig {
    fn default() -> Self {
        Self {
            n_nodes: 1000,
            mean_degree: 6.0,
            n_tasks: 1,
            latent_range: (0.45, 0.55),
            edge_scatter: 0.0,
            train_fraction: 0.6,
            valid_fraction: 0.2,
        }
    }
}

impl ToyGraphConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.latent_range;
        if self.n_nodes < 2 {
            return Err(Error::Config("toy graph needs at least two nodes".into()));
        }
        if !(self.mean_degree >= 0.0) || self.mean_degree > (self.n_nodes - 1) as f64 {
            return Err(Error::Config("mean degree outside [0, n_nodes - 1]".into()));
        }
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config("latent range must satisfy 0 <= lo < hi <= 1".into()));
        }
        if self.n_tasks == 0 || !(self.edge_scatter >= 0.0) {
            return Err(Error::Config("need n_tasks >= 1 and edge_scatter >= 0".into()));
        }
        let f = self.train_fraction + self.valid_fraction;
        if !(self.train_fraction > 0.0 && self.valid_fraction > 0.0 && f < 1.0) {
            return Err(Error::Config("split fractions must be positive and leave a test split".into()));
        }
        Ok(())
    }
}

/// Measurement applied to the true strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeNoise {
    /// Features `[p, 1]`.
    NoiseFree,
    /// Features `[p_hat, N / N_max]`; edges into test nodes draw `N` from
    /// `test`, all others from `train`. `N_max` is the training maximum.
    Binomial { train: TossCount, test: TossCount },
}

impl EdgeNoise {
    pub fn binomial_default() -> Self {
        EdgeNoise::Binomial {
            train: TossCount::training(),
            test: TossCount::extremes(),
        }
    }
}

/// Generated graph with its hidden quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGraph {
    /// Noise-free version of the graph.
    pub graph: Graph,
    pub strengths: Vec<f64>,
    pub latent: Vec<f64>,
    pub seed: u64,
}

pub fn generate_toy_graph(config: &ToyGraphConfig, seed: u64) -> Result<ToyGraph> {
    config.validate()?;
    let n = config.n_nodes;
    let mut rng = rng_from_seed(seed);
    let (lo, hi) = config.latent_range;
    let latent: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();

    let n_pairs = libm::round(n as f64 * config.mean_degree / 2.0) as usize;
    let mut pairs = BTreeSet::new();
    let mut order = Vec::with_capacity(n_pairs);
    while order.len() < n_pairs {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if pairs.insert(key) {
            order.push(key);
        }
    }

    let scatter = Normal::new(0.0, config.edge_scatter).map_err(|_| Error::Config("bad scatter".into()))?;
    let mut src = Vec::with_capacity(2 * n_pairs);
    let mut dst = Vec::with_capacity(2 * n_pairs);
    let mut strengths = Vec::with_capacity(2 * n_pairs);
    for &(a, b) in &order {
        for (s, d) in [(a, b), (b, a)] {
            src.push(s);
            dst.push(d);
            strengths.push((latent[d] + scatter.sample(&mut rng)).clamp(0.0, P_MAX));
        }
    }

    let mut labels = Matrix::zeros(n, config.n_tasks);
    for (v, &q) in latent.iter().enumerate() {
        for k in 0..config.n_tasks {
            let tau = lo + (k + 1) as f64 * (hi - lo) / (config.n_tasks + 1) as f64;
            labels[(v, k)] = f64::from(q > tau);
        }
    }

    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let n_train = libm::round(config.train_fraction * n as f64) as usize;
    let n_valid = libm::round(config.valid_fraction * n as f64) as usize;
    let mut train = nodes[..n_train].to_vec();
    let mut valid = nodes[n_train..n_train + n_valid].to_vec();
    let mut test = nodes[n_train + n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();

    let ef = noise_free_features(&strengths);
    let x = Graph::summed_edge_features(n, &dst, &ef);
    let graph = Graph::new(x, src, dst, ef, labels, train, valid, test)?;
    let isolated = graph.neighborhoods().iter().filter(|nb| nb.is_empty()).count();
    if isolated as f64 > ISOLATED_WARN * n as f64 {
        log::warn!("toy graph: {isolated} of {n} nodes have no neighbors");
    }
    Ok(ToyGraph {
        graph,
        strengths,
        latent,
        seed,
    })
}

fn noise_free_features(strengths: &[f64]) -> Matrix {
    let mut ef = Matrix::zeros(0, 2);
    for &p in strengths {
        ef.push_row(&[p, 1.0]).expect("two columns");
    }
    ef
}

/// Graph with edge features measured under `noise`; node features are
/// re-initialized from the new edge features.
pub fn apply_edge_noise(toy: &ToyGraph, noise: &EdgeNoise, seed: u64) -> Result<Graph> {
    match noise {
        EdgeNoise::NoiseFree => toy.graph.with_edge_features(noise_free_features(&toy.strengths)),
        EdgeNoise::Binomial { train, test } => {
            let g = &toy.graph;
            let mut is_test = alloc::vec![false; g.n_nodes()];
            for &v in g.test_mask() {
                is_test[v] = true;
            }
            let n_max = train.max() as f64;
            let mut rng = rng_from_seed(derive_seed(seed, toy.seed));
            let mut ef = Matrix::zeros(0, 2);
            for (&p, &d) in toy.strengths.iter().zip(g.destinations()) {
                let tosses = if is_test[d] { test } else { train };
                let (p_hat, count) = simulate_noisy_edge(p, tosses, &mut rng);
                ef.push_row(&[p_hat, count as f64 / n_max])?;
            }
            g.with_edge_features(ef)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_degree_matches_config() {
        let cfg = ToyGraphConfig {
            n_nodes: 10_000,
            mean_degree: 5.0,
            ..ToyGraphConfig::default()
        };
        let toy = generate_toy_graph(&cfg, 1).unwrap();
        let d = toy.graph.n_edges() as f64 / 10_000.0;
        assert!((d - 5.0).abs() < 0.05 * 5.0);
    }

    #[test]
    fn zero_edges_give_zero_features() {
        let cfg = ToyGraphConfig {
            n_nodes: 50,
            mean_degree: 0.0,
            ..ToyGraphConfig::default()
        };
        let toy = generate_toy_graph(&cfg, 3).unwrap();
        assert_eq!(toy.graph.n_edges(), 0);
        assert!(toy.graph.node_features().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn seed_determinism_and_masks() {
        let cfg = ToyGraphConfig::default();
        let a = generate_toy_graph(&cfg, 9).unwrap();
        let b = generate_toy_graph(&cfg, 9).unwrap();
        assert_eq!(a, b);
        let g = &a.graph;
        assert_eq!(g.train_mask().len() + g.valid_mask().len() + g.test_mask().len(), g.n_nodes());
        assert!(a.strengths.iter().all(|&p| (0.0..1.0).contains(&p)));
    }

    #[test]
    fn noisy_edges_use_split_specific_tosses() {
        let toy = generate_toy_graph(&ToyGraphConfig::default(), 4).unwrap();
        let noisy = apply_edge_noise(&toy, &EdgeNoise::binomial_default(), 7).unwrap();
        let mut is_test = alloc::vec![false; noisy.n_nodes()];
        for &v in noisy.test_mask() {
            is_test[v] = true;
        }
        for e in noisy.edges() {
            let n = libm::round(e.features[1] * 200.0) as u64;
            if is_test[e.dst] {
                assert!((20..=50).contains(&n) || (170..=200).contains(&n));
            } else {
                assert!((20..=200).contains(&n));
            }
        }
        let clean = apply_edge_noise(&toy, &EdgeNoise::NoiseFree, 7).unwrap();
        assert_eq!(clean, toy.graph);
    }
}
