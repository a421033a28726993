//! Result tables: one metric per row with fixed column order
//! `(experiment, model, n_params, metric, value, spread, seed)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::io::{read_json, write_atomic, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub model: String,
    pub n_params: usize,
    pub metric: String,
    pub value: f64,
    /// Standard deviation; what it runs over is stated in the table note.
    pub spread: Option<f64>,
    /// Replicate seed, or `None` for rows pooled over seeds.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub config_hash: String,
    pub seed: u64,
    /// Meaning of the spread column.
    pub spread_note: String,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(config_hash: &str, seed: u64, spread_note: &str) -> Self {
        Self {
            config_hash: config_hash.into(),
            seed,
            spread_note: spread_note.into(),
            rows: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        experiment: &str,
        model: &str,
        n_params: usize,
        metric: &str,
        value: f64,
        spread: Option<f64>,
        seed: Option<u64>,
    ) {
        self.rows.push(ResultRow {
            experiment: experiment.into(),
            model: model.into(),
            n_params,
            metric: metric.into(),
            value,
            spread,
            seed,
        });
    }

    /// First row matching `model` and `metric` with the given seed.
    pub fn find(&self, model: &str, metric: &str, seed: Option<u64>) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.metric == metric && r.seed == seed)
    }

    pub fn value(&self, model: &str, metric: &str) -> Option<f64> {
        self.find(model, metric, None).map(|r| r.value)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        to_csv(&self.rows)
    }
}

pub fn to_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::format("<csv>", e))?;
    }
    w.into_inner().map_err(|e| HarnessError::format("<csv>", e))
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| HarnessError::format("<csv>", e))
}

pub fn results_dir(run_dir: &Path) -> std::path::PathBuf {
    run_dir.join("results")
}

/// Writes `<run>/results/<name>.json` and `<name>.csv`.
pub fn write_table(run_dir: &Path, name: &str, table: &ResultTable) -> Result<()> {
    let dir = results_dir(run_dir);
    write_json(&dir.join(format!("{name}.json")), table)?;
    write_atomic(&dir.join(format!("{name}.csv")), &table.to_csv()?)
}

/// Every table under `<run>/results`, in file-name order.
pub fn collect_tables(run_dir: &Path) -> Result<Vec<(String, ResultTable)>> {
    let dir = results_dir(run_dir);
    let mut paths: Vec<_> = match std::fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(HarnessError::io(dir, e)),
    };
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, read_json(&p)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub tables: Vec<TableSummary>,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub spread_note: String,
    pub rows: Vec<ResultRow>,
}

/// Renders all tables of a run into `report.csv` and `summary.json`.
pub fn render_report(run_dir: &Path) -> Result<ReportSummary> {
    let tables = collect_tables(run_dir)?;
    let rows: Vec<ResultRow> = tables.iter().flat_map(|(_, t)| t.rows.iter().cloned()).collect();
    if rows.is_empty() {
        return Err(HarnessError::NoResults(run_dir.to_path_buf()));
    }
    write_atomic(&run_dir.join("report.csv"), &to_csv(&rows)?)?;
    let summary = ReportSummary {
        n_rows: rows.len(),
        tables: tables
            .into_iter()
            .map(|(name, t)| TableSummary {
                name,
                config_hash: t.config_hash,
                seed: t.seed,
                spread_note: t.spread_note,
                rows: t.rows,
            })
            .collect(),
    };
    write_json(&run_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
