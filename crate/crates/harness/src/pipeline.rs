//! The staged `simulate -> train -> eval` workflow over a run directory.

use std::path::Path;

use crate::config::{ExperimentConfig, GeneratorConfig};
use crate::error::{HarnessError, Result};
use crate::experiments::{
    self, estimates, linreg_saturation, mse_component, param_names, read_suite, save_trained,
    simulate_suite, train_contenders, write_suite,
};
use crate::io::{self, write_blob, write_json, AnyModel};
use crate::results::{write_table, ResultTable};

/// Score slices recorded per fishnets model.
const N_SLICES: usize = 200;

/// Simulates all datasets of `cfg` into `run_dir/data`.
pub fn run_simulate(cfg: &ExperimentConfig, run_dir: &Path) -> Result<()> {
    let hash = cfg.hash();
    if let GeneratorConfig::ToyGraph { .. } = cfg.generator {
        for seed in cfg.replicate_seeds() {
            for (noise, graph) in experiments::ablation_graphs(cfg, seed)? {
                io::write_graph(&run_dir.join("data").join(format!("graph_s{seed}_{noise}")), &graph, seed, &hash)?;
            }
        }
    } else {
        write_suite(run_dir, &simulate_suite(cfg)?, &hash)?;
    }
    io::write_json(&run_dir.join("config.json"), &serde_json::json!({ "config_hash": hash, "config": cfg }))
}

/// Trains every contender on previously simulated data.
pub fn run_train(cfg: &ExperimentConfig, run_dir: &Path) -> Result<()> {
    if let GeneratorConfig::ToyGraph { .. } = cfg.generator {
        return Err(HarnessError::Config("graph models are trained by graph-ablation".into()));
    }
    let suite = read_suite(run_dir, &cfg.hash())?;
    let trained = train_contenders(cfg, &suite)?;
    save_trained(run_dir, cfg, &trained)
}

/// Evaluates every checkpoint on the test split. For linear regression this
/// includes residuals against the exact MLE and score slices.
pub fn run_eval(cfg: &ExperimentConfig, run_dir: &Path) -> Result<ResultTable> {
    let hash = cfg.hash();
    let test = io::read_split(&io::split_dir(run_dir, "test"), Some(&hash))?;
    let names = param_names(&cfg.generator);
    let mut table = ResultTable::new(&hash, cfg.seed, "standard deviation over test sets");
    for spec in &cfg.models {
        let ckpt = io::read_checkpoint(&io::checkpoint_path(run_dir, &spec.name))?;
        if ckpt.config_hash != hash {
            return Err(HarnessError::format(
                io::checkpoint_path(run_dir, &spec.name),
                "checkpoint was trained under a different config",
            ));
        }
        let model = &ckpt.model;
        let est = estimates(model, &test)?;
        for (k, p) in names.iter().enumerate() {
            let (mse, sd) = mse_component(&est, &test, k);
            table.push(&cfg.experiment, &spec.name, ckpt.n_params, &format!("mse_{p}"), mse, Some(sd), None);
        }
        if let GeneratorConfig::Linreg { prior, .. } = &cfg.generator {
            let fish = match model {
                AnyModel::Fishnets(m) => Some(m),
                _ => None,
            };
            let rec = linreg_saturation(|s| model.estimate(&s.data), fish, prior, &test, N_SLICES)?;
            for (k, p) in names.iter().enumerate() {
                let rmse = rec.rmse_vs_mle()[k];
                let bias = rec.bias_vs_mle()[k];
                table.push(&cfg.experiment, &spec.name, ckpt.n_params, &format!("rmse_vs_mle_{p}"), rmse, None, None);
                table.push(&cfg.experiment, &spec.name, ckpt.n_params, &format!("bias_vs_mle_{p}"), bias, None, None);
            }
            let dir = run_dir.join("residuals");
            for (tag, rows) in [("vs_truth", &rec.vs_truth), ("vs_mle", &rec.vs_mle)] {
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                write_blob(
                    &dir.join(format!("{}_{tag}", spec.name)),
                    &flat,
                    &[rows.len(), names.len()],
                    &hash,
                    cfg.seed,
                    serde_json::json!({ "columns": names }),
                )?;
            }
            if !rec.slices.is_empty() {
                write_json(
                    &dir.join(format!("{}_score_slices.json", spec.name)),
                    &serde_json::json!({ "config_hash": hash, "seed": cfg.seed, "slices": rec.slices }),
                )?;
            }
        }
    }
    write_table(run_dir, "eval", &table)?;
    Ok(table)
}
