//! Simulators and analytic oracles.
//!
//! All simulators are pure functions of `(config, theta, seed)`.

mod edges;
mod gamma;
mod graphgen;
mod linreg;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

pub use edges::{simulate_noisy_edge, simulate_noisy_edges, TossCount};
pub use gamma::{sample_gamma_theta, simulate_gamma_population, GammaPopConfig};
pub use graphgen::{apply_edge_noise, generate_toy_graph, EdgeNoise, ToyGraph, ToyGraphConfig};

pub use linreg::{
    linreg_mle, linreg_score_fisher, linreg_score_fisher_dense, sample_linreg_theta,
    simulate_linreg, simulate_linreg_at, simulate_robustness_test, truncated_exp_mean, LinRegPrior,
    RobustnessShift,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    LinearRegression,
    RobustnessShift,
    GammaPopulation,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: Generator,
    pub seed: u64,
    /// Fraction of draws kept by censorship, when it applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
}

/// One simulated set: `n_data` rows of per-datum features plus the
/// parameters that generated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetDataset {
    pub data: Matrix,
    pub theta: Vec<f64>,
    pub meta: DatasetMeta,
}

impl SetDataset {
    pub fn new(data: Matrix, theta: Vec<f64>, meta: DatasetMeta) -> Self {
        Self { data, theta, meta }
    }

    pub fn n_data(&self) -> usize {
        self.data.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.data.cols()
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.iter_rows()
    }
}
