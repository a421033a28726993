use std::path::Path;

use crate::config::{ExperimentConfig, GeneratorConfig};
use crate::error::{HarnessError, Result};
use crate::results::{write_table, ResultTable};

use super::{estimates, mse_component, param_names, save_trained, simulate_suite, train_contenders, write_suite};

/// Trains every contender on identical data, then reports per-parameter MSE
/// on in-distribution test sets and on the shifted sets.
pub fn run_robustness(cfg: &ExperimentConfig, run_dir: &Path) -> Result<ResultTable> {
    if !matches!(cfg.generator, GeneratorConfig::Linreg { shift: Some(_), .. }) {
        return Err(HarnessError::Config(
            "robustness needs a linreg generator with a shift".into(),
        ));
    }
    let hash = cfg.hash();
    let suite = simulate_suite(cfg)?;
    write_suite(run_dir, &suite, &hash)?;
    let trained = train_contenders(cfg, &suite)?;
    save_trained(run_dir, cfg, &trained)?;

    let names = param_names(&cfg.generator);
    let mut table = ResultTable::new(&hash, cfg.seed, "standard deviation of the squared error over test sets");
    for t in &trained {
        for (tag, sets) in [("in_dist", &suite.test), ("shifted", &suite.shifted)] {
            let est = estimates(&t.model, sets)?;
            for (k, p) in names.iter().enumerate() {
                let (mse, sd) = mse_component(&est, sets, k);
                table.push(
                    &cfg.experiment,
                    &t.spec.name,
                    t.model.n_params(),
                    &format!("mse_{p}_{tag}"),
                    mse,
                    Some(sd),
                    None,
                );
            }
        }
    }
    write_table(run_dir, "robustness", &table)?;
    Ok(table)
}
