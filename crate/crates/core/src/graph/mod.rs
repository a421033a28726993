//! Message passing on graphs with pluggable neighborhood aggregation.

mod agg;
mod model;
mod train;

pub use agg::{
    aggregate_neighborhoods, fishnets_neighborhood_agg, mean_neighborhood_agg,
    softmax_neighborhood_agg, NeighborAggregation,
};
pub use model::{GnnArch, GnnLayer, GnnModel};
pub use train::{bce_with_logits, gnn_train, EpochRecord, GnnTrainConfig, GnnTrainReport};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::linalg::Matrix;
use crate::nn::InputScaling;

/// Directed graph with per-edge feature vectors. A node's neighborhood is
/// the set of edges pointing into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    node_features: Matrix,
    src: Vec<usize>,
    dst: Vec<usize>,
    edge_features: Matrix,
    /// `n_nodes x n_tasks`, entries 0 or 1.
    labels: Matrix,
    train: Vec<usize>,
    valid: Vec<usize>,
    test: Vec<usize>,
    #[serde(skip)]
    incoming: Vec<Vec<usize>>,
}

/// Borrowed view of one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeRef<'a> {
    pub src: usize,
    pub dst: usize,
    pub features: &'a [f64],
}

impl Graph {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        node_features: Matrix,
        src: Vec<usize>,
        dst: Vec<usize>,
        edge_features: Matrix,
        labels: Matrix,
        train: Vec<usize>,
        valid: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let mut g = Self {
            node_features,
            src,
            dst,
            edge_features,
            labels,
            train,
            valid,
            test,
            incoming: Vec::new(),
        };
        g.validate()?;
        g.rebuild_index();
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let n = self.node_features.rows();
        ensure_len("edge destinations", self.src.len(), self.dst.len())?;
        ensure_len("edge feature rows", self.src.len(), self.edge_features.rows())?;
        ensure_len("label rows", n, self.labels.rows())?;
        if let Some(&bad) = self.src.iter().chain(&self.dst).find(|&&v| v >= n) {
            return Err(Error::Config(alloc::format!(
                "edge endpoint {bad} out of range for {n} nodes"
            )));
        }
        let mut seen = vec![0u8; n];
        for (tag, mask) in [(1u8, &self.train), (2, &self.valid), (3, &self.test)] {
            for &v in mask {
                if v >= n {
                    return Err(Error::Config(alloc::format!("mask node {v} out of range")));
                }
                if seen[v] != 0 {
                    return Err(Error::Config(alloc::format!(
                        "node {v} appears in more than one mask (or twice)"
                    )));
                }
                seen[v] = tag;
            }
        }
        Ok(())
    }

    /// Restores the neighborhood index (e.g. after deserialization).
    pub fn rebuild_index(&mut self) {
        let mut incoming = vec![Vec::new(); self.node_features.rows()];
        for (e, &d) in self.dst.iter().enumerate() {
            incoming[d].push(e);
        }
        self.incoming = incoming;
    }

    /// Node features `x_v = sum of features of edges into v`.
    pub fn summed_edge_features(n_nodes: usize, dst: &[usize], edge_features: &Matrix) -> Matrix {
        let mut x = Matrix::zeros(n_nodes, edge_features.cols());
        for (e, &d) in dst.iter().enumerate() {
            for (a, b) in x.row_mut(d).iter_mut().zip(edge_features.row(e)) {
                *a += b;
            }
        }
        x
    }

    pub fn n_nodes(&self) -> usize {
        self.node_features.rows()
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.labels.cols()
    }

    pub fn node_features(&self) -> &Matrix {
        &self.node_features
    }

    pub fn edge_features(&self) -> &Matrix {
        &self.edge_features
    }

    pub fn sources(&self) -> &[usize] {
        &self.src
    }

    pub fn destinations(&self) -> &[usize] {
        &self.dst
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeRef<'_>> {
        (0..self.n_edges()).map(move |e| EdgeRef {
            src: self.src[e],
            dst: self.dst[e],
            features: self.edge_features.row(e),
        })
    }

    pub fn labels(&self) -> &Matrix {
        &self.labels
    }

    /// Edge ids pointing into each node.
    pub fn neighborhoods(&self) -> &[Vec<usize>] {
        &self.incoming
    }

    pub fn train_mask(&self) -> &[usize] {
        &self.train
    }

    pub fn valid_mask(&self) -> &[usize] {
        &self.valid
    }

    pub fn test_mask(&self) -> &[usize] {
        &self.test
    }

    /// Same topology and labels with new edge features; node features are
    /// re-initialized by summation.
    pub fn with_edge_features(&self, edge_features: Matrix) -> Result<Self> {
        ensure_len("edge feature rows", self.n_edges(), edge_features.rows())?;
        let x = Self::summed_edge_features(self.n_nodes(), &self.dst, &edge_features);
        Self::new(
            x,
            self.src.clone(),
            self.dst.clone(),
            edge_features,
            self.labels.clone(),
            self.train.clone(),
            self.valid.clone(),
            self.test.clone(),
        )
    }

    /// Per-column standardization of edge features, fitted on the edges that
    /// point into training nodes only, applied to every edge. Node features
    /// are re-summed from the standardized edges.
    pub fn standardize_edge_features(&self) -> Result<(Self, InputScaling)> {
        let mut is_train = vec![false; self.n_nodes()];
        for &v in &self.train {
            is_train[v] = true;
        }
        let rows = self
            .dst
            .iter()
            .enumerate()
            .filter(|&(_, &d)| is_train[d])
            .map(|(e, _)| self.edge_features.row(e));
        let scaling = InputScaling::fit(rows, self.edge_features.cols());
        let mut ef = self.edge_features.clone();
        for row in ef.as_mut_slice().chunks_exact_mut(scaling.shift.len().max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&scaling.shift).zip(&scaling.scale) {
                *v = (*v - m) * s;
            }
        }
        Ok((self.with_edge_features(ef)?, scaling))
    }

    /// Relabels node `v` as `perm[v]`, carrying edges, labels and masks along.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        ensure_len("permutation", n, perm.len())?;
        let mut x = Matrix::zeros(n, self.node_features.cols());
        let mut y = Matrix::zeros(n, self.labels.cols());
        for v in 0..n {
            x.row_mut(perm[v]).copy_from_slice(self.node_features.row(v));
            y.row_mut(perm[v]).copy_from_slice(self.labels.row(v));
        }
        let map = |m: &[usize]| m.iter().map(|&v| perm[v]).collect::<Vec<_>>();
        Self::new(
            x,
            map(&self.src),
            map(&self.dst),
            self.edge_features.clone(),
            y,
            map(&self.train),
            map(&self.valid),
            map(&self.test),
        )
    }
}

/// Area under the ROC curve by the rank-sum statistic, ties sharing the
/// average rank. `labels` are treated as positive when `> 0.5`.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    ensure_len("labels", scores.len(), labels.len())?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&l| l > 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC-AUC needs both classes"));
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block i..=j shares the mean rank
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] > 0.5 {
                rank_sum += rank;
            }
        }
        i = j + 1;
    }
    let p = n_pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_hand_values() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        // one of four pos/neg pairs misordered
        let a = roc_auc(&[0.1, 0.6, 0.5, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((a - 0.75).abs() < 1e-15);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1.0, 1.0]), Err(Error::UndefinedMetric(_))));
    }

    fn tiny() -> Graph {
        let ef = Matrix::from_rows(&[vec![0.5, 1.0], vec![0.25, 0.5], vec![1.0, 0.0]]).unwrap();
        let dst = vec![1, 1, 2];
        let x = Graph::summed_edge_features(3, &dst, &ef);
        Graph::new(
            x,
            vec![0, 2, 0],
            dst,
            ef,
            Matrix::zeros(3, 1),
            vec![0],
            vec![1],
            vec![2],
        )
        .unwrap()
    }

    #[test]
    fn summed_features_and_index() {
        let g = tiny();
        assert_eq!(g.node_features().row(0), &[0.0, 0.0]);
        assert_eq!(g.node_features().row(1), &[0.75, 1.5]);
        assert_eq!(g.neighborhoods()[1], vec![0, 1]);
        assert!(g.neighborhoods()[0].is_empty());
    }

    #[test]
    fn standardization_uses_training_edges_only() {
        let g = tiny();
        let g = Graph::new(
            g.node_features().clone(),
            g.sources().to_vec(),
            g.destinations().to_vec(),
            g.edge_features().clone(),
            g.labels().clone(),
            vec![1],
            vec![],
            vec![2],
        )
        .unwrap();
        let (s, scaling) = g.standardize_edge_features().unwrap();
        // edges 0 and 1 feed node 1: column 0 has mean 0.375, sd 0.125 sqrt 2
        assert!((scaling.shift[0] - 0.375).abs() < 1e-15);
        let sd = 0.125 * core::f64::consts::SQRT_2;
        assert!((s.edge_features()[(0, 0)] - 0.125 / sd).abs() < 1e-12);
        assert!((s.edge_features()[(1, 0)] + 0.125 / sd).abs() < 1e-12);
        assert!((s.edge_features()[(2, 0)] - 0.625 / sd).abs() < 1e-12);
        let summed = s.edge_features()[(0, 1)] + s.edge_features()[(1, 1)];
        assert!((s.node_features()[(1, 1)] - summed).abs() < 1e-15);
    }

    #[test]
    fn invalid_graphs_rejected() {
        let ef = Matrix::zeros(1, 1);
        let bad_edge = Graph::new(Matrix::zeros(2, 1), vec![0], vec![5], ef.clone(), Matrix::zeros(2, 1), vec![], vec![], vec![]);
        assert!(bad_edge.is_err());
        let overlap = Graph::new(Matrix::zeros(2, 1), vec![0], vec![1], ef, Matrix::zeros(2, 1), vec![0], vec![0], vec![]);
        assert!(overlap.is_err());
    }
}
