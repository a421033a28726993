use std::path::Path;

use fishnets_core::stats::{ks_test, pit_values, KsResult, PitRecord};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, GeneratorConfig};
use crate::error::{HarnessError, Result};
use crate::io::{write_blob, AnyModel};
use crate::results::{write_table, ResultTable};

use super::{param_names, save_trained, simulate_suite, train_contenders, write_suite};

#[derive(Debug, Clone, PartialEq)]
pub struct GammaPitOutcome {
    pub table: ResultTable,
    /// PIT values of the retained test sets, one row per set.
    pub pit: Vec<Vec<f64>>,
    /// One test per parameter.
    pub ks: Vec<KsResult>,
    /// Test sets dropped because the posterior had no mass in the prior box.
    pub n_degenerate: usize,
}

/// Trains the first fishnets contender on Gamma-model sets and checks the
/// calibration of `N(theta_hat, F^-1)` truncated to the prior box.
pub fn run_gamma_pit(cfg: &ExperimentConfig, run_dir: &Path) -> Result<GammaPitOutcome> {
    let GeneratorConfig::Gamma { population, .. } = &cfg.generator else {
        return Err(HarnessError::Config("gamma-pit needs a gamma generator".into()));
    };
    let hash = cfg.hash();
    let suite = simulate_suite(cfg)?;
    write_suite(run_dir, &suite, &hash)?;
    let trained = train_contenders(cfg, &suite)?;
    save_trained(run_dir, cfg, &trained)?;
    let (name, model) = trained
        .iter()
        .find_map(|t| match &t.model {
            AnyModel::Fishnets(m) => Some((t.spec.name.clone(), m)),
            _ => None,
        })
        .ok_or_else(|| HarnessError::Config("gamma-pit needs a fishnets model".into()))?;

    let bounds = population.prior_box();
    let records: Vec<PitRecord> = suite
        .test
        .par_iter()
        .map(|set| {
            let s = model.summarize(&set.data)?;
            Ok(pit_values(&s.theta_hat, &s.f_nn.inverse(), &bounds, &set.theta)?)
        })
        .collect::<Result<_>>()?;
    let mut pit = Vec::new();
    let mut n_degenerate = 0;
    for r in records {
        match r {
            PitRecord::Values(v) => pit.push(v),
            PitRecord::Degenerate { .. } => n_degenerate += 1,
        }
    }
    if n_degenerate > 0 {
        log::warn!("{n_degenerate} test sets had a degenerate posterior and were excluded");
    }

    let names = param_names(&cfg.generator);
    let ks: Vec<KsResult> = (0..names.len())
        .map(|k| ks_test(&pit.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect::<fishnets_core::Result<_>>()?;

    let n_params = model.score_net.n_params() + model.fisher_net.n_params();
    let mut table = ResultTable::new(&hash, cfg.seed, "none");
    for (p, r) in names.iter().zip(&ks) {
        table.push(&cfg.experiment, &name, n_params, &format!("ks_stat_{p}"), r.statistic, None, None);
        table.push(&cfg.experiment, &name, n_params, &format!("ks_p_{p}"), r.p_value, None, None);
    }
    table.push(&cfg.experiment, &name, n_params, "n_pit", pit.len() as f64, None, None);
    table.push(&cfg.experiment, &name, n_params, "n_degenerate", n_degenerate as f64, None, None);
    write_table(run_dir, "gamma_pit", &table)?;

    let flat: Vec<f64> = pit.iter().flatten().copied().collect();
    write_blob(
        &run_dir.join("pit").join(&name),
        &flat,
        &[pit.len(), names.len()],
        &hash,
        cfg.seed,
        serde_json::json!({ "columns": names, "n_degenerate": n_degenerate }),
    )?;
    Ok(GammaPitOutcome {
        table,
        pit,
        ks,
        n_degenerate,
    })
}
