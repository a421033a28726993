//! Experiment runners and the pieces they share: split simulation, model
//! construction and training of set contenders.

mod gamma;
mod graph;
mod linreg;
mod robustness;

use std::path::Path;

use fishnets_core::baselines::DeepsetModel;
use fishnets_core::fishnets::FishnetsModel;
use fishnets_core::genmodels::{
    sample_gamma_theta, simulate_gamma_population, simulate_linreg, simulate_robustness_test,
    SetDataset,
};
use fishnets_core::nn::InputScaling;
use fishnets_core::rng::{derive_seed, rng_from_seed};
use fishnets_core::train::{fit, TrainReport};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, GeneratorConfig, ModelKind, ModelSpec};
use crate::error::{HarnessError, Result};
use crate::io::{self, AnyModel, Checkpoint};

pub use gamma::{run_gamma_pit, GammaPitOutcome};
pub use graph::{ablation_graphs, run_graph_ablation, GraphAblationOutcome, GraphRun};
pub use linreg::{linreg_saturation, SaturationRecords, ScoreSlice};
pub use robustness::run_robustness;

/// Simulated sets of a set-valued experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSuite {
    pub train: Vec<SetDataset>,
    pub valid: Vec<SetDataset>,
    pub test: Vec<SetDataset>,
    /// Test sets under a distribution shift, when configured.
    pub shifted: Vec<SetDataset>,
}

impl SetSuite {
    fn splits(&self) -> [(&'static str, &[SetDataset]); 4] {
        [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
            ("shifted", &self.shifted),
        ]
    }
}

/// Parameter names used in metric labels.
pub fn param_names(generator: &GeneratorConfig) -> &'static [&'static str] {
    match generator {
        GeneratorConfig::Linreg { .. } => &["m", "b"],
        GeneratorConfig::Gamma { .. } => &["mu", "scale"],
        GeneratorConfig::ToyGraph { .. } => &[],
    }
}

/// Seed of set `index` in split `split`.
pub fn set_seed(root: u64, split: usize, index: usize) -> u64 {
    derive_seed(derive_seed(root, split as u64), index as u64)
}

fn simulate_split<F>(count: usize, root: u64, split: usize, one: F) -> Result<Vec<SetDataset>>
where
    F: Fn(u64) -> fishnets_core::Result<SetDataset> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| one(set_seed(root, split, i)).map_err(HarnessError::from))
        .collect()
}

/// Simulates every split of a set generator. Pure in `(config, seed)`.
pub fn simulate_suite(cfg: &ExperimentConfig) -> Result<SetSuite> {
    let root = cfg.seed;
    match &cfg.generator {
        GeneratorConfig::Linreg {
            prior,
            splits,
            shift,
            n_shifted,
        } => {
            let lin = |n| move |s| simulate_linreg(prior, n, s);
            let shifted = match shift {
                Some(sh) => simulate_split(n_shifted.unwrap_or(splits.n_test), root, 3, |s| {
                    simulate_robustness_test(prior, sh, s)
                })?,
                None => Vec::new(),
            };
            Ok(SetSuite {
                train: simulate_split(splits.n_train, root, 0, lin(splits.n_data_train))?,
                valid: simulate_split(splits.n_valid, root, 1, lin(splits.n_data_train))?,
                test: simulate_split(splits.n_test, root, 2, lin(splits.n_data_test))?,
                shifted,
            })
        }
        GeneratorConfig::Gamma { population, splits } => {
            let gamma = |n| {
                move |s| {
                    let theta = sample_gamma_theta(population, &mut rng_from_seed(s));
                    simulate_gamma_population(population, &theta, n, derive_seed(s, 1))
                }
            };
            Ok(SetSuite {
                train: simulate_split(splits.n_train, root, 0, gamma(splits.n_data_train))?,
                valid: simulate_split(splits.n_valid, root, 1, gamma(splits.n_data_train))?,
                test: simulate_split(splits.n_test, root, 2, gamma(splits.n_data_test))?,
                shifted: Vec::new(),
            })
        }
        GeneratorConfig::ToyGraph { .. } => Err(HarnessError::Config(
            "graph generators have no set splits".into(),
        )),
    }
}

pub fn write_suite(run_dir: &Path, suite: &SetSuite, config_hash: &str) -> Result<()> {
    for (name, sets) in suite.splits() {
        if !sets.is_empty() || name != "shifted" {
            io::write_split(&io::split_dir(run_dir, name), sets, config_hash)?;
        }
    }
    Ok(())
}

/// Reads a suite written by [`write_suite`] for the same config.
pub fn read_suite(run_dir: &Path, config_hash: &str) -> Result<SetSuite> {
    let read = |name| io::read_split(&io::split_dir(run_dir, name), Some(config_hash));
    let shifted_dir = io::split_dir(run_dir, "shifted");
    Ok(SetSuite {
        train: read("train")?,
        valid: read("valid")?,
        test: read("test")?,
        shifted: if shifted_dir.exists() { read("shifted")? } else { Vec::new() },
    })
}

/// Center of the sampling prior, used as the fiducial offset `c`.
fn prior_center(generator: &GeneratorConfig) -> Vec<f64> {
    match generator {
        GeneratorConfig::Linreg { prior, .. } => prior.theta_mean.clone(),
        GeneratorConfig::Gamma { population, .. } => population
            .prior_box()
            .iter()
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect(),
        GeneratorConfig::ToyGraph { .. } => Vec::new(),
    }
}

/// Seed of the initial weights of contender `index`.
pub fn init_seed(root: u64, index: usize) -> u64 {
    derive_seed(root ^ 0x1417, index as u64)
}

/// Fresh set model for `spec`, inputs standardized with `scaling`.
pub fn build_set_model(
    spec: &ModelSpec,
    generator: &GeneratorConfig,
    scaling: &InputScaling,
    input_dim: usize,
    seed: u64,
) -> Result<AnyModel> {
    let n_p = param_names(generator).len();
    let mut rng = rng_from_seed(seed);
    Ok(match &spec.kind {
        ModelKind::Fishnets { arch } => {
            let mut m = FishnetsModel::init(input_dim, n_p, arch, &mut rng)?
                .with_input_scaling(scaling.clone())?;
            m.fiducial = prior_center(generator);
            AnyModel::Fishnets(m)
        }
        ModelKind::Deepset { aggregation, arch } => AnyModel::Deepset(
            DeepsetModel::init(input_dim, n_p, arch, *aggregation, &mut rng)?
                .with_input_scaling(scaling.clone())?,
        ),
        ModelKind::Gnn { .. } => {
            return Err(HarnessError::Config(format!(
                "model {} is a graph model",
                spec.name
            )))
        }
    })
}

/// A trained set contender.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub spec: ModelSpec,
    pub model: AnyModel,
    pub report: TrainReport,
}

/// Trains every configured contender on the same data and schedule.
/// Contenders run concurrently; each is deterministic on its own.
pub fn train_contenders(cfg: &ExperimentConfig, suite: &SetSuite) -> Result<Vec<Trained>> {
    let dim = suite
        .train
        .first()
        .map(|s| s.feature_dim())
        .ok_or_else(|| HarnessError::Config("no training sets".into()))?;
    let scaling = InputScaling::fit(suite.train.iter().flat_map(|s| s.rows()), dim);
    cfg.models
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut model = build_set_model(spec, &cfg.generator, &scaling, dim, init_seed(cfg.seed, i))?;
            let report = match &mut model {
                AnyModel::Fishnets(m) => fit(m, &suite.train, &suite.valid, &cfg.training)?,
                AnyModel::Deepset(m) => fit(m, &suite.train, &suite.valid, &cfg.training)?,
                AnyModel::Gnn(_) => unreachable!("rejected by build_set_model"),
            };
            log::info!(
                "{}: {} params, validation loss {:?} -> {:?}",
                spec.name,
                model.n_params(),
                report.initial_valid_loss(),
                report.final_valid_loss()
            );
            Ok(Trained {
                spec: spec.clone(),
                model,
                report,
            })
        })
        .collect()
}

/// Writes checkpoints and loss histories of trained contenders.
pub fn save_trained(run_dir: &Path, cfg: &ExperimentConfig, trained: &[Trained]) -> Result<()> {
    let hash = cfg.hash();
    for t in trained {
        let ckpt = Checkpoint::new(&t.spec.name, cfg.seed, &hash, t.model.clone());
        io::write_checkpoint(&io::checkpoint_path(run_dir, &t.spec.name), &ckpt)?;
        io::write_json(
            &run_dir.join("histories").join(format!("{}.json", t.spec.name)),
            &serde_json::json!({
                "config_hash": hash,
                "seed": cfg.seed,
                "train_loss": t.report.train_loss,
                "valid_loss": t.report.valid_loss,
            }),
        )?;
    }
    Ok(())
}

/// Per-set estimates of `model` on `sets`.
pub fn estimates(model: &AnyModel, sets: &[SetDataset]) -> Result<Vec<Vec<f64>>> {
    sets.par_iter().map(|s| model.estimate(&s.data)).collect()
}

/// Mean and standard deviation over sets of the squared error of parameter
/// `k`.
pub fn mse_component(est: &[Vec<f64>], sets: &[SetDataset], k: usize) -> (f64, f64) {
    let se: Vec<f64> = est
        .iter()
        .zip(sets)
        .map(|(e, s)| (e[k] - s.theta[k]).powi(2))
        .collect();
    fishnets_core::stats::mean_std(&se)
}
