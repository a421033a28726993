//! Experiment configuration, read from TOML.
//!
//! A config names its generator, the contenders to train and the training
//! schedule. Its hash (SHA-256 of the canonical JSON form) is stamped on every
//! artifact written for it.

use std::path::{Path, PathBuf};

use fishnets_core::baselines::{DeepsetArch, SetAggregation};
use fishnets_core::fishnets::FishnetsArch;
use fishnets_core::genmodels::{EdgeNoise, GammaPopConfig, LinRegPrior, RobustnessShift, ToyGraphConfig};
use fishnets_core::graph::{GnnArch, GnnTrainConfig};
use fishnets_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form label copied into result tables.
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    /// Replicate seeds for graph experiments; defaults to `[seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub graph_training: GnnTrainConfig,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
}

/// Sizes of the simulated splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Splits {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub n_data_train: usize,
    pub n_data_test: usize,
}

impl Default for Splits {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_valid: 200,
            n_test: 200,
            n_data_train: 500,
            n_data_test: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    Linreg {
        #[serde(default)]
        prior: LinRegPrior,
        #[serde(default)]
        splits: Splits,
        /// Adds a `shifted` split drawn under this covariate/noise shift.
        #[serde(default)]
        shift: Option<RobustnessShift>,
        #[serde(default)]
        n_shifted: Option<usize>,
    },
    Gamma {
        #[serde(default)]
        population: GammaPopConfig,
        #[serde(default)]
        splits: Splits,
    },
    ToyGraph {
        #[serde(default)]
        graph: ToyGraphConfig,
        #[serde(default = "EdgeNoise::binomial_default")]
        noise: EdgeNoise,
        /// Standardize edge features with training-edge statistics.
        #[serde(default = "yes")]
        standardize: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ModelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Fishnets {
        #[serde(default)]
        arch: FishnetsArch,
    },
    Deepset {
        aggregation: SetAggregation,
        #[serde(default)]
        arch: DeepsetArch,
    },
    Gnn {
        #[serde(default)]
        arch: GnnArch,
    },
}

impl ModelKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::Fishnets { .. } => "fishnets",
            ModelKind::Deepset { .. } => "deepset",
            ModelKind::Gnn { .. } => "gnn",
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::Config("model names must be unique".into()));
        }
        if self.models.iter().any(|m| m.name.is_empty() || m.name.contains(['/', '\\'])) {
            return Err(HarnessError::Config("model names must be non-empty path segments".into()));
        }
        match &self.generator {
            GeneratorConfig::Linreg { prior, splits, .. } => {
                prior.validate()?;
                check_splits(splits)?;
                self.require_set_models()
            }
            GeneratorConfig::Gamma { population, splits } => {
                population.validate()?;
                check_splits(splits)?;
                self.require_set_models()
            }
            GeneratorConfig::ToyGraph { graph, .. } => {
                graph.validate()?;
                if self.models.iter().any(|m| !matches!(m.kind, ModelKind::Gnn { .. })) {
                    return Err(HarnessError::Config("graph generators take only gnn models".into()));
                }
                Ok(())
            }
        }
    }

    fn require_set_models(&self) -> Result<()> {
        if self.models.iter().any(|m| matches!(m.kind, ModelKind::Gnn { .. })) {
            return Err(HarnessError::Config("set generators cannot train gnn models".into()));
        }
        Ok(())
    }

    /// Replicate seeds, falling back to the root seed.
    pub fn replicate_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding, `output_dir` excluded so
    /// relocated runs keep their identity.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config is always serializable");
        hex::encode(Sha256::digest(&json))
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }
}

fn check_splits(s: &Splits) -> Result<()> {
    if s.n_train == 0 || s.n_data_train == 0 || s.n_data_test == 0 {
        return Err(HarnessError::Config("splits need n_train, n_data_train, n_data_test >= 1".into()));
    }
    Ok(())
}
