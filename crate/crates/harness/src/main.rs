use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fishnets_harness::experiments::{run_gamma_pit, run_graph_ablation, run_robustness};
use fishnets_harness::pipeline::{run_eval, run_simulate, run_train};
use fishnets_harness::results::render_report;
use fishnets_harness::{ExperimentConfig, HarnessError, Result};

/// Simulation, training and evaluation of set and graph aggregators.
#[derive(Debug, Parser)]
#[command(name = "fishnets", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate every dataset of the config into the run directory.
    Simulate(RunArgs),
    /// Train the configured contenders on simulated data.
    Train(RunArgs),
    /// Evaluate trained checkpoints on the test split.
    Eval(RunArgs),
    /// Simulate, train and evaluate under a covariate/noise shift.
    Robustness(RunArgs),
    /// Calibration of the Gaussian posterior on the Gamma population model.
    GammaPit(RunArgs),
    /// Aggregator comparison on clean and noisy synthetic graphs.
    GraphAblation(RunArgs),
    /// Collect result tables of a run into report.csv and summary.json.
    Report {
        /// Run directory.
        run_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Run directory; defaults to the config's output_dir.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let dir = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok((cfg.with_output_dir(&dir), dir))
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => {
            let (cfg, dir) = a.load()?;
            run_simulate(&cfg, &dir)?;
            done(&dir)
        }
        Command::Train(a) => {
            let (cfg, dir) = a.load()?;
            run_train(&cfg, &dir)?;
            done(&dir)
        }
        Command::Eval(a) => {
            let (cfg, dir) = a.load()?;
            let table = run_eval(&cfg, &dir)?;
            print_table(&table.rows);
            done(&dir)
        }
        Command::Robustness(a) => {
            let (cfg, dir) = a.load()?;
            print_table(&run_robustness(&cfg, &dir)?.rows);
            done(&dir)
        }
        Command::GammaPit(a) => {
            let (cfg, dir) = a.load()?;
            print_table(&run_gamma_pit(&cfg, &dir)?.table.rows);
            done(&dir)
        }
        Command::GraphAblation(a) => {
            let (cfg, dir) = a.load()?;
            print_table(&run_graph_ablation(&cfg, &dir)?.table.rows);
            done(&dir)
        }
        Command::Report { run_dir } => {
            let summary = render_report(&run_dir)?;
            println!("{} rows from {} tables", summary.n_rows, summary.tables.len());
            done(&run_dir)
        }
    }
}

fn done(dir: &Path) -> Result<()> {
    println!("outputs in {}", dir.display());
    Ok(())
}

fn print_table(rows: &[fishnets_harness::results::ResultRow]) {
    for r in rows {
        let spread = r.spread.map(|s| format!(" ± {s:.4}")).unwrap_or_default();
        let seed = r.seed.map(|s| format!(" [seed {s}]")).unwrap_or_default();
        println!("{:<12} {:<24} {:>12.6}{spread}{seed}", r.model, r.metric, r.value);
    }
}

fn report_error(e: &HarnessError) {
    let line = serde_json::json!({ "error": { "category": e.category(), "message": e.to_string() } });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
