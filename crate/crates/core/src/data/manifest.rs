use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{remap_labels, Split};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBundle};
use crate::train::Task;

/// How a dataset is divided into train/validation/test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    /// A split file `{"train": [...], "val": [...], "test": [...]}`,
    /// relative to the manifest.
    File { path: PathBuf },
    Explicit(Split),
    /// Seeded random split by ratio.
    Ratio { ratios: [f64; 3], seed: u64 },
}

/// Describes a dataset stored as graph-bundle files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub task: Task,
    /// Graph-bundle files, relative to the manifest. A node task has one.
    pub graphs: Vec<PathBuf>,
    /// Graph labels (graph task); node labels live inside the bundle.
    #[serde(default)]
    pub labels: Option<Vec<usize>>,
    /// Human-readable name of each label value.
    #[serde(default)]
    pub label_names: Option<Vec<String>>,
    /// Defaults to a seeded 6:2:2 ratio split.
    #[serde(default)]
    pub split: Option<SplitSpec>,
    pub feature_dim: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    fn resolve_split(&self, base: &Path, n_items: usize) -> Result<Split> {
        let split = match &self.split {
            Some(SplitSpec::File { path }) => Split::read(&base.join(path))?,
            Some(SplitSpec::Explicit(s)) => s.clone(),
            Some(SplitSpec::Ratio { ratios, seed }) => Split::random(n_items, *ratios, *seed)?,
            None => Split::random(n_items, DEFAULT_SPLIT_RATIOS, self.seed.unwrap_or(0))?,
        };
        split.validate(n_items)?;
        Ok(split)
    }
}

#[derive(Clone, Debug)]
pub struct NodeDataset {
    pub name: String,
    pub graph: Graph,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
}

#[derive(Clone, Debug)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn check_dim(name: &str, expected: usize, graph: &Graph) -> Result<()> {
    if graph.dim() != expected {
        return Err(Error::data(format!(
            "{name}: manifest declares feature dimension {expected}, bundle has {}",
            graph.dim()
        )));
    }
    Ok(())
}

/// Loads a single-graph node-classification dataset. Without a split in
/// the manifest the nodes are divided 6:2:2 by the manifest seed.
pub fn load_node_dataset(manifest_path: &Path) -> Result<NodeDataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    if manifest.task != Task::Node {
        return Err(Error::data(format!("{} is not a node-classification manifest", manifest.name)));
    }
    let [bundle_path] = manifest.graphs.as_slice() else {
        return Err(Error::data("a node dataset has exactly one graph bundle"));
    };
    let base = base_dir(manifest_path);
    let bundle = GraphBundle::read(&base.join(bundle_path))?;
    let raw = bundle
        .labels
        .clone()
        .ok_or_else(|| Error::data(format!("{}: graph bundle has no node labels", manifest.name)))?;
    let graph = bundle.to_graph()?;
    if raw.len() != graph.n() {
        return Err(Error::data(format!("{} labels for {} nodes", raw.len(), graph.n())));
    }
    check_dim(&manifest.name, manifest.feature_dim, &graph)?;
    let (labels, values) = remap_labels(&raw);
    let split = manifest.resolve_split(&base, graph.n())?;
    Ok(NodeDataset {
        name: manifest.name,
        graph,
        labels,
        classes: values.len(),
        split,
    })
}

/// Loads a multi-graph classification dataset described by a manifest.
pub fn load_graph_dataset(manifest_path: &Path) -> Result<GraphDataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    if manifest.task != Task::Graph {
        return Err(Error::data(format!("{} is not a graph-classification manifest", manifest.name)));
    }
    let raw = manifest
        .labels
        .clone()
        .ok_or_else(|| Error::data(format!("{}: manifest has no graph labels", manifest.name)))?;
    if raw.len() != manifest.graphs.len() {
        return Err(Error::data(format!("{} labels for {} graphs", raw.len(), manifest.graphs.len())));
    }
    let base = base_dir(manifest_path);
    let graphs = manifest
        .graphs
        .iter()
        .map(|p| {
            let g = GraphBundle::read(&base.join(p))?.to_graph()?;
            check_dim(&manifest.name, manifest.feature_dim, &g)?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let (labels, values) = remap_labels(&raw);
    let split = manifest.resolve_split(&base, graphs.len())?;
    Ok(GraphDataset {
        name: manifest.name,
        graphs,
        labels,
        classes: values.len(),
        split,
    })
}

/// Train/validation/test ratios used when a manifest names no split.
pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [6.0, 2.0, 2.0];
