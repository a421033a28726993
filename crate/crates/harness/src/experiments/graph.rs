use std::path::Path;

use fishnets_core::genmodels::{apply_edge_noise, generate_toy_graph, EdgeNoise};
use fishnets_core::graph::{gnn_train, GnnModel, GnnTrainReport, Graph};
use fishnets_core::rng::{derive_seed, rng_from_seed};
use fishnets_core::stats::mean_std;
use fishnets_core::train::Parameterized;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, GeneratorConfig, ModelKind};
use crate::error::{HarnessError, Result};
use crate::io::{self, AnyModel, Checkpoint};
use crate::results::{write_table, ResultTable};

/// One contender trained on one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRun {
    pub seed: u64,
    /// `"clean"` or `"noisy"`.
    pub noise: &'static str,
    pub model: String,
    pub n_params: usize,
    pub report: GnnTrainReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphAblationOutcome {
    pub table: ResultTable,
    pub runs: Vec<GraphRun>,
}

impl GraphAblationOutcome {
    pub fn runs_of<'a>(&'a self, model: &'a str, noise: &'a str) -> impl Iterator<Item = &'a GraphRun> + 'a {
        self.runs.iter().filter(move |r| r.model == model && r.noise == noise)
    }
}

/// Builds the clean and noisy versions of the toy graph for `seed`.
pub fn ablation_graphs(cfg: &ExperimentConfig, seed: u64) -> Result<[(&'static str, Graph); 2]> {
    let GeneratorConfig::ToyGraph {
        graph,
        noise,
        standardize,
    } = &cfg.generator
    else {
        return Err(HarnessError::Config("graph-ablation needs a toy_graph generator".into()));
    };
    let toy = generate_toy_graph(graph, seed)?;
    let prepare = |n: &EdgeNoise| -> Result<Graph> {
        let g = apply_edge_noise(&toy, n, derive_seed(seed, 11))?;
        Ok(if *standardize { g.standardize_edge_features()?.0 } else { g })
    };
    Ok([("clean", prepare(&EdgeNoise::NoiseFree)?), ("noisy", prepare(noise)?)])
}

/// Trains every gnn contender on the clean and noisy graphs of every
/// replicate seed. All contenders of a seed share the initialization seed.
pub fn run_graph_ablation(cfg: &ExperimentConfig, run_dir: &Path) -> Result<GraphAblationOutcome> {
    let hash = cfg.hash();
    let mut jobs = Vec::new();
    for seed in cfg.replicate_seeds() {
        for (noise, graph) in ablation_graphs(cfg, seed)? {
            io::write_graph(&run_dir.join("data").join(format!("graph_s{seed}_{noise}")), &graph, seed, &hash)?;
            for spec in &cfg.models {
                jobs.push((seed, noise, graph.clone(), spec.clone()));
            }
        }
    }
    let runs: Vec<(GraphRun, GnnModel)> = jobs
        .into_par_iter()
        .map(|(seed, noise, graph, spec)| {
            let ModelKind::Gnn { arch } = &spec.kind else {
                return Err(HarnessError::Config(format!("{} is not a gnn model", spec.name)));
            };
            let mut rng = rng_from_seed(derive_seed(seed, 100));
            let mut model = GnnModel::init(
                graph.node_features().cols(),
                graph.edge_features().cols(),
                graph.n_tasks(),
                arch,
                &mut rng,
            )?;
            let report = gnn_train(&mut model, &graph, &cfg.graph_training)?;
            log::info!(
                "seed {seed} {noise} {}: best epoch {}, test auc {:.4}",
                spec.name,
                report.best_epoch,
                report.test_auc
            );
            let run = GraphRun {
                seed,
                noise,
                model: spec.name.clone(),
                n_params: model.n_params(),
                report,
            };
            Ok((run, model))
        })
        .collect::<Result<_>>()?;

    for (run, model) in &runs {
        let name = format!("{}_s{}_{}", run.model, run.seed, run.noise);
        let ckpt = Checkpoint::new(&name, run.seed, &hash, AnyModel::Gnn(model.clone()));
        io::write_checkpoint(&io::checkpoint_path(run_dir, &name), &ckpt)?;
    }
    let runs: Vec<GraphRun> = runs.into_iter().map(|(r, _)| r).collect();

    let mut table = ResultTable::new(
        &hash,
        cfg.seed,
        "per-seed rows: std of the test metric over the final epochs; pooled rows: std over seeds",
    );
    for spec in &cfg.models {
        let mine: Vec<&GraphRun> = runs.iter().filter(|r| r.model == spec.name).collect();
        let n_params = mine.first().map_or(0, |r| r.n_params);
        for r in &mine {
            table.push(
                &cfg.experiment,
                &spec.name,
                r.n_params,
                &format!("test_auc_{}", r.noise),
                r.report.test_auc,
                Some(r.report.test_auc_spread),
                Some(r.seed),
            );
            table.push(
                &cfg.experiment,
                &spec.name,
                r.n_params,
                &format!("best_epoch_{}", r.noise),
                r.report.best_epoch as f64,
                None,
                Some(r.seed),
            );
        }
        let pooled = |noise: &str| -> Vec<f64> {
            mine.iter().filter(|r| r.noise == noise).map(|r| r.report.test_auc).collect()
        };
        let (clean, noisy) = (pooled("clean"), pooled("noisy"));
        let degradation: Vec<f64> = clean.iter().zip(&noisy).map(|(c, n)| c - n).collect();
        for (metric, values) in [
            ("test_auc_clean", &clean),
            ("test_auc_noisy", &noisy),
            ("degradation", &degradation),
        ] {
            let (m, sd) = mean_std(values);
            table.push(&cfg.experiment, &spec.name, n_params, metric, m, Some(sd), None);
        }
    }
    write_table(run_dir, "graph_ablation", &table)?;
    Ok(GraphAblationOutcome { table, runs })
}
