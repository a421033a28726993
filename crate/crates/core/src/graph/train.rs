use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::model::GnnModel;
use super::{roc_auc, Graph};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::nn::{adam_step, AdamConfig, AdamState};
use crate::stats::mean_std;
use crate::train::Parameterized;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnTrainConfig {
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation metric.
    pub patience: usize,
    pub adam: AdamConfig,
    /// Epochs at the end of the history used for the test-metric spread.
    pub spread_window: usize,
}

impl Default for GnnTrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            patience: 250,
            adam: AdamConfig {
                learning_rate: 2e-3,
                ..AdamConfig::default()
            },
            spread_window: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_auc: f64,
    pub valid_auc: f64,
    pub test_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnTrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_auc: f64,
    /// Test metric at the best validation epoch.
    pub test_auc: f64,
    /// Standard deviation of the test metric over the final window.
    pub test_auc_spread: f64,
}

/// Mean binary cross-entropy over `nodes` and all tasks, and its gradient
/// with respect to the logits (zero outside `nodes`).
pub fn bce_with_logits(logits: &[f64], labels: &Matrix, nodes: &[usize]) -> (f64, Vec<f64>) {
    let t = labels.cols();
    let mut grad = vec![0.0; logits.len()];
    if nodes.is_empty() {
        return (0.0, grad);
    }
    let count = (nodes.len() * t) as f64;
    let mut loss = 0.0;
    for &v in nodes {
        for k in 0..t {
            let z = logits[v * t + k];
            let y = labels[(v, k)];
            loss += math::softplus(z) - y * z;
            grad[v * t + k] = (math::sigmoid(z) - y) / count;
        }
    }
    (loss / count, grad)
}

/// Task-averaged ROC-AUC over `nodes`; tasks with a single class are skipped.
fn masked_auc(logits: &[f64], labels: &Matrix, nodes: &[usize]) -> Result<f64> {
    let t = labels.cols();
    let mut total = 0.0;
    let mut used = 0;
    for k in 0..t {
        let s: Vec<f64> = nodes.iter().map(|&v| logits[v * t + k]).collect();
        let y: Vec<f64> = nodes.iter().map(|&v| labels[(v, k)]).collect();
        match roc_auc(&s, &y) {
            Ok(a) => {
                total += a;
                used += 1;
            }
            Err(Error::UndefinedMetric(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::UndefinedMetric("no task has both classes in the mask"));
    }
    Ok(total / used as f64)
}

/// Full-batch Adam on the train mask with patience-based early stopping on
/// validation ROC-AUC. Metrics of epoch `e` are measured before its update.
/// The model is left at the parameters of the best validation epoch.
pub fn gnn_train(model: &mut GnnModel, graph: &Graph, config: &GnnTrainConfig) -> Result<GnnTrainReport> {
    if config.max_epochs == 0 {
        return Err(Error::Config("max_epochs must be positive".into()));
    }
    let labels = graph.labels();
    let mut state = AdamState::new(model.n_params(), config.adam);
    let mut params = model.flat_params();
    let mut best = (0usize, f64::NEG_INFINITY, f64::NAN);
    let mut best_params = params.clone();
    let mut history = Vec::new();

    for epoch in 0..config.max_epochs {
        let tape = model.forward_tape(graph)?;
        let logits = GnnModel::logits(&tape);
        let (loss, d_logits) = bce_with_logits(logits, labels, graph.train_mask());
        let record = EpochRecord {
            epoch,
            train_loss: loss,
            train_auc: masked_auc(logits, labels, graph.train_mask())?,
            valid_auc: masked_auc(logits, labels, graph.valid_mask())?,
            test_auc: masked_auc(logits, labels, graph.test_mask())?,
        };
        history.push(record);
        if record.valid_auc > best.1 {
            best = (epoch, record.valid_auc, record.test_auc);
            best_params.copy_from_slice(&params);
        } else if epoch - best.0 > config.patience {
            break;
        }

        let mut grads = vec![0.0; params.len()];
        model.backward(graph, &tape, &d_logits, &mut grads)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                step: 0,
                reason: "non-finite training loss",
            });
        }
        adam_step(&mut params, &grads, &mut state).map_err(|_| Error::Divergence {
            epoch,
            step: 0,
            reason: "non-finite gradient",
        })?;
        model.set_flat_params(&params)?;
    }
    model.set_flat_params(&best_params)?;
    let window = config.spread_window.max(1).min(history.len());
    let tail: Vec<f64> = history[history.len() - window..].iter().map(|r| r.test_auc).collect();
    Ok(GnnTrainReport {
        history,
        best_epoch: best.0,
        best_valid_auc: best.1,
        test_auc: best.2,
        test_auc_spread: mean_std(&tail).1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values_and_gradient() {
        let labels = Matrix::from_rows(&[vec![1.0], vec![0.0], vec![1.0]]).unwrap();
        let (loss, g) = bce_with_logits(&[0.0, 0.0, 5.0], &labels, &[0, 1]);
        assert!((loss - math::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![-0.25, 0.25, 0.0]);
    }
}
