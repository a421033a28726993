//! On-disk formats. Every file is written to a temporary sibling and renamed
//! into place, so readers never observe a partial artifact.
//!
//! * Blobs: little-endian `f64` (or `u64`) arrays in `<name>.bin`, described
//!   by a JSON sidecar `<name>.json`.
//! * Datasets: one blob plus sidecar per simulated set under `data/<split>/`.
//! * Graphs: `graph.json` sidecar, `graph.edges.bin` (u64 pairs) and
//!   `graph.values.bin` (node features, edge features, labels).
//! * Checkpoints: JSON, tagged by model kind.

use std::fs;
use std::path::{Path, PathBuf};

use fishnets_core::baselines::DeepsetModel;
use fishnets_core::fishnets::FishnetsModel;
use fishnets_core::genmodels::{DatasetMeta, SetDataset};
use fishnets_core::graph::{Graph, GnnModel};
use fishnets_core::linalg::Matrix;
use fishnets_core::train::Parameterized;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| HarnessError::format(path, "path has no file name"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| HarnessError::format(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| HarnessError::format(path, e))
}

pub fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn u64_bytes(values: &[u64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_words(path: &Path, expected: usize) -> Result<Vec<[u8; 8]>> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(HarnessError::format(
            path,
            format!("expected {} bytes, found {}", expected * 8, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| c.try_into().expect("chunk of 8"))
        .collect())
}

pub fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    Ok(read_words(path, expected)?.into_iter().map(f64::from_le_bytes).collect())
}

pub fn read_u64s(path: &Path, expected: usize) -> Result<Vec<u64>> {
    Ok(read_words(path, expected)?.into_iter().map(u64::from_le_bytes).collect())
}

/// Sidecar of a raw array blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSidecar {
    pub format_version: u32,
    pub dtype: String,
    /// Row-major shape.
    pub shape: Vec<usize>,
    pub config_hash: String,
    pub seed: u64,
    /// Column names or other free-form description.
    #[serde(default)]
    pub description: serde_json::Value,
}

/// Writes a row-major `f64` array as `<stem>.bin` + `<stem>.json`.
pub fn write_blob(
    stem: &Path,
    values: &[f64],
    shape: &[usize],
    config_hash: &str,
    seed: u64,
    description: serde_json::Value,
) -> Result<()> {
    debug_assert_eq!(shape.iter().product::<usize>(), values.len());
    write_atomic(&stem.with_extension("bin"), &f64_bytes(values))?;
    write_json(
        &stem.with_extension("json"),
        &BlobSidecar {
            format_version: FORMAT_VERSION,
            dtype: "f64le".into(),
            shape: shape.to_vec(),
            config_hash: config_hash.into(),
            seed,
            description,
        },
    )
}

pub fn read_blob(stem: &Path) -> Result<(BlobSidecar, Vec<f64>)> {
    let sidecar: BlobSidecar = read_json(&stem.with_extension("json"))?;
    if sidecar.dtype != "f64le" {
        return Err(HarnessError::format(stem, format!("unsupported dtype {}", sidecar.dtype)));
    }
    let n = sidecar.shape.iter().product();
    let values = read_f64s(&stem.with_extension("bin"), n)?;
    Ok((sidecar, values))
}

/// Sidecar of one simulated set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub format_version: u32,
    pub meta: DatasetMeta,
    pub theta: Vec<f64>,
    pub n_data: usize,
    pub feature_dim: usize,
    pub config_hash: String,
}

pub fn split_dir(run_dir: &Path, split: &str) -> PathBuf {
    run_dir.join("data").join(split)
}

fn record_stem(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:06}"))
}

/// Writes `sets` as records `000000.bin/json, 000001.bin/json, ...` in `dir`,
/// replacing any previous records there.
pub fn write_split(dir: &Path, sets: &[SetDataset], config_hash: &str) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    for (i, set) in sets.iter().enumerate() {
        let stem = record_stem(dir, i);
        write_atomic(&stem.with_extension("bin"), &f64_bytes(set.data.as_slice()))?;
        write_json(
            &stem.with_extension("json"),
            &DatasetSidecar {
                format_version: FORMAT_VERSION,
                meta: set.meta.clone(),
                theta: set.theta.clone(),
                n_data: set.n_data(),
                feature_dim: set.feature_dim(),
                config_hash: config_hash.into(),
            },
        )?;
    }
    Ok(())
}

/// Reads every record in `dir` in index order. With `config_hash` given,
/// records stamped with another hash are rejected.
pub fn read_split(dir: &Path, config_hash: Option<&str>) -> Result<Vec<SetDataset>> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut stems: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| p.with_extension(""))
        .collect();
    stems.sort();
    stems
        .iter()
        .map(|stem| {
            let side: DatasetSidecar = read_json(&stem.with_extension("json"))?;
            if let Some(h) = config_hash {
                if side.config_hash != h {
                    return Err(HarnessError::format(stem, "dataset was simulated under a different config"));
                }
            }
            let values = read_f64s(&stem.with_extension("bin"), side.n_data * side.feature_dim)?;
            let data = Matrix::from_vec(side.n_data, side.feature_dim, values)?;
            Ok(SetDataset::new(data, side.theta, side.meta))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSidecar {
    pub format_version: u32,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub node_dim: usize,
    pub edge_dim: usize,
    pub n_tasks: usize,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub config_hash: String,
}

/// Writes `graph` under `dir` as `graph.json`, `graph.edges.bin`,
/// `graph.values.bin`.
pub fn write_graph(dir: &Path, graph: &Graph, seed: u64, config_hash: &str) -> Result<()> {
    let edges: Vec<u64> = graph
        .sources()
        .iter()
        .zip(graph.destinations())
        .flat_map(|(&s, &d)| [s as u64, d as u64])
        .collect();
    let values: Vec<f64> = [graph.node_features(), graph.edge_features(), graph.labels()]
        .iter()
        .flat_map(|m| m.as_slice().iter().copied())
        .collect();
    write_atomic(&dir.join("graph.edges.bin"), &u64_bytes(&edges))?;
    write_atomic(&dir.join("graph.values.bin"), &f64_bytes(&values))?;
    write_json(
        &dir.join("graph.json"),
        &GraphSidecar {
            format_version: FORMAT_VERSION,
            n_nodes: graph.n_nodes(),
            n_edges: graph.n_edges(),
            node_dim: graph.node_features().cols(),
            edge_dim: graph.edge_features().cols(),
            n_tasks: graph.n_tasks(),
            train: graph.train_mask().to_vec(),
            valid: graph.valid_mask().to_vec(),
            test: graph.test_mask().to_vec(),
            seed,
            config_hash: config_hash.into(),
        },
    )
}

pub fn read_graph(dir: &Path) -> Result<(GraphSidecar, Graph)> {
    let side: GraphSidecar = read_json(&dir.join("graph.json"))?;
    let edges = read_u64s(&dir.join("graph.edges.bin"), 2 * side.n_edges)?;
    let n_node = side.n_nodes * side.node_dim;
    let n_edge = side.n_edges * side.edge_dim;
    let n_label = side.n_nodes * side.n_tasks;
    let values = read_f64s(&dir.join("graph.values.bin"), n_node + n_edge + n_label)?;
    let (src, dst): (Vec<usize>, Vec<usize>) = edges
        .chunks_exact(2)
        .map(|p| (p[0] as usize, p[1] as usize))
        .unzip();
    let graph = Graph::new(
        Matrix::from_vec(side.n_nodes, side.node_dim, values[..n_node].to_vec())?,
        src,
        dst,
        Matrix::from_vec(side.n_edges, side.edge_dim, values[n_node..n_node + n_edge].to_vec())?,
        Matrix::from_vec(side.n_nodes, side.n_tasks, values[n_node + n_edge..].to_vec())?,
        side.train.clone(),
        side.valid.clone(),
        side.test.clone(),
    )?;
    Ok((side, graph))
}

/// Any trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum AnyModel {
    Fishnets(FishnetsModel),
    Deepset(DeepsetModel),
    Gnn(GnnModel),
}

impl AnyModel {
    pub fn n_params(&self) -> usize {
        match self {
            AnyModel::Fishnets(m) => m.n_params(),
            AnyModel::Deepset(m) => m.n_params(),
            AnyModel::Gnn(m) => m.n_params(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            AnyModel::Fishnets(_) => "fishnets",
            AnyModel::Deepset(_) => "deepset",
            AnyModel::Gnn(_) => "gnn",
        }
    }

    /// Point estimate for a set; graph models have none.
    pub fn estimate(&self, data: &Matrix) -> Result<Vec<f64>> {
        match self {
            AnyModel::Fishnets(m) => Ok(m.estimate(data)?),
            AnyModel::Deepset(m) => Ok(m.forward(data)?),
            AnyModel::Gnn(_) => Err(HarnessError::Config("graph models do not estimate set parameters".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub n_params: usize,
    #[serde(flatten)]
    pub model: AnyModel,
}

impl Checkpoint {
    pub fn new(name: &str, seed: u64, config_hash: &str, model: AnyModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            name: name.into(),
            seed,
            config_hash: config_hash.into(),
            n_params: model.n_params(),
            model,
        }
    }
}

pub fn checkpoint_path(run_dir: &Path, name: &str) -> PathBuf {
    run_dir.join("checkpoints").join(format!("{name}.json"))
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_json(path, ckpt)
}

/// Reads a checkpoint and checks its recorded parameter count.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = read_json(path)?;
    if ckpt.format_version != FORMAT_VERSION {
        return Err(HarnessError::format(path, format!("format version {}", ckpt.format_version)));
    }
    if ckpt.n_params != ckpt.model.n_params() {
        return Err(HarnessError::format(
            path,
            format!("records {} parameters, model has {}", ckpt.n_params, ckpt.model.n_params()),
        ));
    }
    Ok(ckpt)
}
