//! Minibatch training loop shared by every set model.
//!
//! A batch is `batch_size` whole simulated datasets. Each dataset's gradient
//! is computed into its own buffer (optionally in parallel) and the buffers
//! are reduced in batch order, so serial and parallel runs agree bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genmodels::SetDataset;
use crate::nn::{adam_step, AdamConfig, AdamState};
use crate::rng::{derive_seed, rng_from_seed};

/// Models whose parameters can be viewed as one flat vector.
pub trait Parameterized {
    fn n_params(&self) -> usize;
    fn flat_params(&self) -> Vec<f64>;
    fn set_flat_params(&mut self, params: &[f64]) -> Result<()>;
}

/// Per-dataset objective of a set model.
pub trait SetObjective: Parameterized + Sync {
    /// Scratch buffers reused across gradient evaluations. Never affects
    /// results.
    type Workspace: Default + Send;

    /// Loss on one dataset.
    fn loss(&self, set: &SetDataset) -> Result<f64>;

    /// Loss on one dataset; adds `scale * d loss / d params` into `grad`.
    fn loss_and_grad(
        &self,
        set: &SetDataset,
        scale: f64,
        grad: &mut [f64],
        ws: &mut Self::Workspace,
    ) -> Result<f64>;
}

/// Multiply the learning rate by `factor` at each epoch in `milestones`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl Default for StepDecay {
    fn default() -> Self {
        Self {
            milestones: Vec::new(),
            factor: 0.5,
        }
    }
}

impl StepDecay {
    pub fn learning_rate(&self, base: f64, epoch: usize) -> f64 {
        let hits = self.milestones.iter().filter(|&&m| epoch >= m).count();
        let mut lr = base;
        for _ in 0..hits {
            lr *= self.factor;
        }
        lr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub decay: StepDecay,
    /// Rescale the batch gradient to at most this global norm.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            decay: StepDecay::default(),
            clip_norm: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss before training, then after every epoch.
    pub valid_loss: Vec<f64>,
}

impl TrainReport {
    pub fn initial_valid_loss(&self) -> Option<f64> {
        self.valid_loss.first().copied()
    }

    pub fn final_valid_loss(&self) -> Option<f64> {
        self.valid_loss.last().copied()
    }
}

/// Mean loss of `model` over `sets`.
pub fn mean_loss<M: SetObjective>(model: &M, sets: &[SetDataset]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    let losses = map_sets(sets, |s| model.loss(s))?;
    Ok(losses.iter().sum::<f64>() / sets.len() as f64)
}

#[cfg(feature = "parallel")]
fn map_sets<T: Send, F>(sets: &[SetDataset], f: F) -> Result<Vec<T>>
where
    F: Fn(&SetDataset) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    sets.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_sets<T, F>(sets: &[SetDataset], f: F) -> Result<Vec<T>>
where
    F: Fn(&SetDataset) -> Result<T>,
{
    sets.iter().map(f).collect()
}

fn batch_gradient<M: SetObjective>(
    model: &M,
    batch: &[&SetDataset],
    n_params: usize,
    ws: &mut M::Workspace,
) -> Result<(f64, Vec<f64>)> {
    let scale = 1.0 / batch.len() as f64;
    let per_set = |ws: &mut M::Workspace, set: &&SetDataset| -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; n_params];
        let loss = model.loss_and_grad(set, scale, &mut g, ws)?;
        Ok((loss, g))
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(f64, Vec<f64>)> = {
        use rayon::prelude::*;
        if rayon::current_num_threads() > 1 {
            batch
                .par_iter()
                .map_init(M::Workspace::default, per_set)
                .collect::<Result<_>>()?
        } else {
            batch
                .iter()
                .map(|s| per_set(ws, s))
                .collect::<Result<_>>()?
        }
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(f64, Vec<f64>)> = batch
        .iter()
        .map(|s| per_set(ws, s))
        .collect::<Result<_>>()?;

    let mut grad = vec![0.0; n_params];
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l * scale;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

/// Trains `model` with Adam on `train`, recording losses per epoch.
///
/// On a non-finite loss or gradient the parameters are rolled back to the
/// start of the failing epoch and a [`Error::Divergence`] is returned.
pub fn fit<M: SetObjective>(
    model: &mut M,
    train: &[SetDataset],
    valid: &[SetDataset],
    config: &TrainConfig,
) -> Result<TrainReport> {
    if train.is_empty() && config.epochs > 0 {
        return Err(Error::Config("no training datasets".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let n_params = model.n_params();
    let mut state = AdamState::new(n_params, config.adam);
    let mut report = TrainReport::default();
    if !valid.is_empty() {
        report.valid_loss.push(mean_loss(model, valid)?);
    }

    let mut ws = M::Workspace::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        let checkpoint = model.flat_params();
        state.learning_rate = config.decay.learning_rate(config.adam.learning_rate, epoch);
        let mut rng = rng_from_seed(derive_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);

        let mut params = checkpoint.clone();
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&SetDataset> = chunk.iter().map(|&i| &train[i]).collect();
            let diverged = |reason| Error::Divergence {
                epoch,
                step,
                reason,
            };
            let (loss, mut grad) = match batch_gradient(model, &batch, n_params, &mut ws) {
                Ok(v) => v,
                Err(Error::NotPositiveDefinite) => {
                    model.set_flat_params(&checkpoint)?;
                    return Err(diverged("Fisher lost positive definiteness"));
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                model.set_flat_params(&checkpoint)?;
                return Err(diverged("non-finite loss or gradient"));
            }
            if let Some(max_norm) = config.clip_norm {
                let norm = crate::linalg::norm(&grad);
                if norm > max_norm {
                    let s = max_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam_step(&mut params, &grad, &mut state)
                .map_err(|_| diverged("adam rejected gradient"))?;
            model.set_flat_params(&params)?;
            epoch_loss += loss;
            n_batches += 1;
        }
        report.train_loss.push(epoch_loss / n_batches.max(1) as f64);
        if !valid.is_empty() {
            let v = mean_loss(model, valid)?;
            if !v.is_finite() {
                model.set_flat_params(&checkpoint)?;
                return Err(Error::Divergence {
                    epoch,
                    step: n_batches,
                    reason: "non-finite validation loss",
                });
            }
            report.valid_loss.push(v);
        }
        log::debug!(
            "epoch {epoch}: train {:.5} valid {:?}",
            report.train_loss[epoch],
            report.valid_loss.last()
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_halves_at_milestones() {
        let d = StepDecay {
            milestones: vec![10, 20],
            factor: 0.5,
        };
        assert_eq!(d.learning_rate(1.0, 0), 1.0);
        assert_eq!(d.learning_rate(1.0, 10), 0.5);
        assert_eq!(d.learning_rate(1.0, 25), 0.25);
    }
}
