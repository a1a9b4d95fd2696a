//! Classification drivers: the synthetic motif benchmark, node
//! classification on one graph, and k-fold graph classification.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{kfold_splits, load_graph_dataset, load_node_dataset, load_tudataset, Split};
use crate::error::{Error, Result};
use crate::experiments::config::{apply_overrides, grid_points, GridAxis};
use crate::experiments::{export_filters, sub_rng, Check};
use crate::export::write_csv;
use crate::graph::Graph;
use crate::synth::{build_motif_classification_dataset, MotifDatasetConfig, MotifKind};
use crate::train::{train_classifier, Checkpoint, ClassifierRun, EpochMetrics, GomkcnModel, ModelConfig, Pooling, PreparedGraph, Samples, Task, TrainConfig};

/// The part of a classification config that grids may vary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tunable {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct Fitted {
    run: ClassifierRun,
    point: usize,
}

/// Trains one model per grid point (or a seeded sample of `limit` points)
/// and keeps the one with the best validation accuracy, earliest on ties.
#[allow(clippy::too_many_arguments)]
fn fit_best(
    base: &Tunable,
    grid: &[GridAxis],
    limit: Option<usize>,
    task: Task,
    input_dim: usize,
    classes: usize,
    prepare: &dyn Fn(&GomkcnModel) -> Result<Vec<PreparedGraph>>,
    labels: &[usize],
    split: &Split,
    seed: u64,
) -> Result<Fitted> {
    let mut points = grid_points(grid);
    let mut order: Vec<usize> = (0..points.len()).collect();
    if let Some(k) = limit {
        order.shuffle(&mut sub_rng(seed, 0x9e1d));
        order.truncate(k.max(1));
        order.sort_unstable();
    }
    let mut best: Option<Fitted> = None;
    for &p in &order {
        let tun: Tunable = apply_overrides(base, &std::mem::take(&mut points[p]))?;
        let mut train = tun.train.clone();
        train.seed = seed;
        let mut model = GomkcnModel::new(tun.model.clone(), task, input_dim, classes, &mut sub_rng(seed, 1))?;
        let prepared = prepare(&model)?;
        let samples = match task {
            Task::Node => Samples::Nodes {
                graph: &prepared[0],
                labels,
            },
            Task::Graph => Samples::Graphs { graphs: &prepared, labels },
        };
        let run = train_classifier(&mut model, &samples, split, &train, |_| {})?;
        log::info!(
            "grid point {p}: val {:?} test {:?} (best epoch {})",
            run.val_accuracy,
            run.test_accuracy,
            run.best_epoch
        );
        let better = match &best {
            None => true,
            Some(b) => run.val_accuracy.unwrap_or(run.train_accuracy) > b.run.val_accuracy.unwrap_or(b.run.train_accuracy),
        };
        if better {
            best = Some(Fitted { run, point: p });
        }
    }
    best.ok_or_else(|| Error::config("empty hyperparameter grid"))
}

#[derive(Serialize)]
struct HistoryRow {
    run: usize,
    epoch: usize,
    loss: f64,
    val_accuracy: Option<f64>,
}

fn history_rows(run: usize, h: &[EpochMetrics]) -> impl Iterator<Item = HistoryRow> + '_ {
    h.iter().map(move |m| HistoryRow {
        run,
        epoch: m.epoch,
        loss: m.loss,
        val_accuracy: m.val_accuracy,
    })
}

// ---------------------------------------------------------------- motifs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotifClassifyConfig {
    pub dataset: MotifDatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Seeds data generation, initialization and shuffling; overrides the
    /// nested seeds.
    pub seed: u64,
    pub min_test_accuracy: f64,
    /// Test graphs whose per-node responses go to `responses.csv`.
    pub response_graphs: usize,
}

impl Default for MotifClassifyConfig {
    fn default() -> Self {
        Self {
            dataset: MotifDatasetConfig::default(),
            // a hidden ReLU layer dies at lr 0.1 and pins accuracy at chance
            model: ModelConfig {
                classifier_hidden: Vec::new(),
                ..ModelConfig::default()
            },
            train: TrainConfig {
                epochs: 200,
                learning_rate: 0.1,
                batch_size: 512,
                ..TrainConfig::default()
            },
            seed: 0,
            min_test_accuracy: 0.99,
            response_graphs: 16,
        }
    }
}

impl MotifClassifyConfig {
    /// Copies the top-level seed into the nested configs.
    pub fn resolve(&mut self) {
        self.dataset.seed = self.seed;
        self.train.seed = self.seed;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MotifClassifyReport {
    pub graphs: usize,
    pub class_counts: Vec<usize>,
    pub split_sizes: [usize; 3],
    pub best_epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// For each motif class: the filter with the largest mean response on
    /// planted-motif nodes of that class (test graphs).
    pub motif_filter: Vec<(MotifKind, usize)>,
    pub checks: Vec<Check>,
}

#[derive(Serialize)]
struct ResponseRow {
    graph: usize,
    label: String,
    node: usize,
    in_motif: bool,
    filter: usize,
    kappa: f64,
}

pub fn run_motif_classification(cfg: &MotifClassifyConfig, out: Option<&Path>) -> Result<MotifClassifyReport> {
    let mut cfg = cfg.clone();
    cfg.resolve();
    let data = build_motif_classification_dataset(&cfg.dataset)?;
    let classes = data.motifs.len();
    let dim = cfg.dataset.dim;
    let mut model = GomkcnModel::new(cfg.model.clone(), Task::Graph, dim, classes, &mut sub_rng(cfg.seed, 1))?;
    let prepared = data
        .graphs
        .par_iter()
        .map(|g| model.prepare_graph(g.clone()))
        .collect::<Result<Vec<_>>>()?;
    let samples = Samples::Graphs {
        graphs: &prepared,
        labels: &data.labels,
    };
    let run = train_classifier(&mut model, &samples, &data.split, &cfg.train, |m| {
        log::info!("epoch {}: loss {:.5} val {:?}", m.epoch, m.loss, m.val_accuracy);
    })?;

    let filters = cfg.model.filters;
    let mut sums = vec![vec![0.0; filters]; classes];
    let mut rows = Vec::new();
    for (pos, &gi) in data.split.test.iter().enumerate() {
        let z = model.node_responses(&prepared[gi])?;
        let label = data.labels[gi];
        let motif_nodes = &data.attachments[gi].nodes;
        for &v in motif_nodes {
            for j in 0..filters {
                sums[label][j] += z[(v, j)];
            }
        }
        if pos < cfg.response_graphs {
            for v in 0..z.nrows() {
                for j in 0..filters {
                    rows.push(ResponseRow {
                        graph: gi,
                        label: data.motifs[label].name().to_string(),
                        node: v,
                        in_motif: motif_nodes.contains(&v),
                        filter: j,
                        kappa: z[(v, j)],
                    });
                }
            }
        }
    }
    let motif_filter = (0..classes)
        .map(|c| {
            let mut best = 0;
            for j in 1..filters {
                if sums[c][j] > sums[c][best] {
                    best = j;
                }
            }
            (data.motifs[c], best)
        })
        .collect();

    let test = run.test_accuracy.unwrap_or(0.0);
    let checks = vec![Check::new(
        "motif.test_accuracy",
        test >= cfg.min_test_accuracy,
        format!(
            "test accuracy {:.4} on {} graphs (need {:.2})",
            test,
            data.split.test.len(),
            cfg.min_test_accuracy
        ),
    )];

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("metrics.csv"), &history_rows(0, &run.history).collect::<Vec<_>>())?;
        write_csv(&dir.join("responses.csv"), &rows)?;
        export_filters(dir, "filter", &model.layers[0].filters)?;
        Checkpoint::from_model(&model, serde_json::to_value(&cfg)?, run.best_epoch, cfg.seed).write(&dir.join("checkpoint.json"))?;
    }
    Ok(MotifClassifyReport {
        graphs: data.graphs.len(),
        class_counts: data.class_counts(),
        split_sizes: [data.split.train.len(), data.split.val.len(), data.split.test.len()],
        best_epoch: run.best_epoch,
        train_accuracy: run.train_accuracy,
        val_accuracy: run.val_accuracy,
        test_accuracy: run.test_accuracy,
        motif_filter,
        checks,
    })
}

// ------------------------------------------------------------------ nodes

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeClassifyConfig {
    /// Dataset manifest (graph bundle, labels, optional split).
    pub manifest: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Repetitions, each with seed `seed + r`.
    pub runs: usize,
    /// Draw a fresh split with `split_ratios` for every run; otherwise use
    /// the manifest's split throughout.
    pub resplit: bool,
    pub split_ratios: [f64; 3],
    pub grid: Vec<GridAxis>,
    /// Evaluate only this many seeded grid points per run.
    pub grid_samples: Option<usize>,
    pub seed: u64,
    /// Reference accuracy and allowed deviation; both set → gating check.
    pub target_accuracy: Option<f64>,
    pub tolerance: Option<f64>,
}

impl Default for NodeClassifyConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            model: ModelConfig {
                front_sizes: vec![32],
                filters: 5,
                filter_nodes: 6,
                hop_radius: 2,
                t: 2,
                tau: 0.6,
                dropout: 0.2,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                epochs: 200,
                learning_rate: 0.06,
                batch_size: 512,
                ..TrainConfig::default()
            },
            runs: 10,
            resplit: true,
            split_ratios: [6.0, 2.0, 2.0],
            grid: Vec::new(),
            grid_samples: None,
            seed: 0,
            target_accuracy: None,
            tolerance: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub grid_point: usize,
    pub best_epoch: usize,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeClassifyReport {
    pub dataset: String,
    pub nodes: usize,
    pub classes: usize,
    pub runs: Vec<RunRecord>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub checks: Vec<Check>,
}

fn target_check(name: &str, mean: f64, target: Option<f64>, tolerance: Option<f64>) -> Vec<Check> {
    match (target, tolerance) {
        (Some(t), Some(tol)) => vec![Check::new(
            name,
            (mean - t).abs() <= tol,
            format!("mean accuracy {:.4} vs reference {t:.4} ± {tol:.4}", mean),
        )],
        _ => Vec::new(),
    }
}

pub fn run_node_classification(cfg: &NodeClassifyConfig, out: Option<&Path>) -> Result<NodeClassifyReport> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::config("node classification needs `manifest`"))?;
    if cfg.runs == 0 {
        return Err(Error::config("runs must be positive"));
    }
    let data = load_node_dataset(path)?;
    let base = Tunable {
        model: cfg.model.clone(),
        train: cfg.train.clone(),
    };
    let labels = &data.labels;
    let mut records = Vec::with_capacity(cfg.runs);
    let mut rows = Vec::new();
    for r in 0..cfg.runs {
        let seed = cfg.seed + r as u64;
        let split = if cfg.resplit {
            Split::random(data.graph.n(), cfg.split_ratios, seed)?
        } else {
            data.split.clone()
        };
        let graph = &data.graph;
        let fitted = fit_best(
            &base,
            &cfg.grid,
            cfg.grid_samples,
            Task::Node,
            graph.dim(),
            data.classes,
            &|m: &GomkcnModel| Ok(vec![m.prepare_graph(graph.clone())?]),
            labels,
            &split,
            seed,
        )?;
        rows.extend(history_rows(r, &fitted.run.history));
        log::info!("run {r}: test {:?}", fitted.run.test_accuracy);
        records.push(RunRecord {
            run: r,
            seed,
            grid_point: fitted.point,
            best_epoch: fitted.run.best_epoch,
            val_accuracy: fitted.run.val_accuracy,
            test_accuracy: fitted.run.test_accuracy.unwrap_or(f64::NAN),
        });
    }
    let (mean, std) = mean_std(&records.iter().map(|r| r.test_accuracy).collect::<Vec<_>>());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("metrics.csv"), &rows)?;
        write_csv(&dir.join("runs.csv"), &records)?;
    }
    Ok(NodeClassifyReport {
        dataset: data.name,
        nodes: data.graph.n(),
        classes: data.classes,
        runs: records,
        mean_accuracy: mean,
        std_accuracy: std,
        checks: target_check("node.accuracy", mean, cfg.target_accuracy, cfg.tolerance),
    })
}

// ----------------------------------------------------------------- graphs

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphClassifyConfig {
    /// A TU-format directory, or a graph-dataset manifest file.
    pub dataset: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub folds: usize,
    /// Run only the first this-many folds.
    pub max_folds: Option<usize>,
    pub grid: Vec<GridAxis>,
    pub grid_samples: Option<usize>,
    pub seed: u64,
    pub target_accuracy: Option<f64>,
    pub tolerance: Option<f64>,
}

impl Default for GraphClassifyConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            model: ModelConfig {
                front_sizes: vec![8],
                filters: 8,
                filter_nodes: 8,
                hop_radius: 2,
                t: 2,
                tau: 1.0,
                pooling: Pooling::Add,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                epochs: 300,
                learning_rate: 0.01,
                batch_size: 128,
                ..TrainConfig::default()
            },
            folds: 10,
            max_folds: None,
            grid: Vec::new(),
            grid_samples: None,
            seed: 0,
            target_accuracy: None,
            tolerance: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphClassifyReport {
    pub dataset: String,
    pub graphs: usize,
    pub classes: usize,
    pub folds: Vec<RunRecord>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub checks: Vec<Check>,
}

fn load_graphs(path: &Path) -> Result<(String, Vec<Graph>, Vec<usize>, usize)> {
    if path.is_dir() {
        let ds = load_tudataset(path)?;
        let classes = ds.classes();
        Ok((ds.name, ds.graphs, ds.labels, classes))
    } else {
        let ds = load_graph_dataset(path)?;
        Ok((ds.name, ds.graphs, ds.labels, ds.classes))
    }
}

pub fn run_graph_classification(cfg: &GraphClassifyConfig, out: Option<&Path>) -> Result<GraphClassifyReport> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::config("graph classification needs `dataset`"))?;
    let (name, graphs, labels, classes) = load_graphs(path)?;
    let dim = graphs.first().map_or(0, Graph::dim);
    let folds = kfold_splits(graphs.len(), cfg.folds, cfg.seed)?;
    let base = Tunable {
        model: cfg.model.clone(),
        train: cfg.train.clone(),
    };
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (f, fold) in folds.iter().enumerate().take(cfg.max_folds.unwrap_or(usize::MAX)) {
        let seed = cfg.seed + f as u64;
        let graphs = &graphs;
        let fitted = fit_best(
            &base,
            &cfg.grid,
            cfg.grid_samples,
            Task::Graph,
            dim,
            classes,
            &|m: &GomkcnModel| graphs.par_iter().map(|g| m.prepare_graph(g.clone())).collect(),
            &labels,
            &fold.split(),
            seed,
        )?;
        rows.extend(history_rows(f, &fitted.run.history));
        log::info!("fold {f}: test {:?}", fitted.run.test_accuracy);
        records.push(RunRecord {
            run: f,
            seed,
            grid_point: fitted.point,
            best_epoch: fitted.run.best_epoch,
            val_accuracy: fitted.run.val_accuracy,
            test_accuracy: fitted.run.test_accuracy.unwrap_or(f64::NAN),
        });
    }
    let (mean, std) = mean_std(&records.iter().map(|r| r.test_accuracy).collect::<Vec<_>>());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("metrics.csv"), &rows)?;
        write_csv(&dir.join("folds.csv"), &records)?;
    }
    Ok(GraphClassifyReport {
        dataset: name,
        graphs: graphs.len(),
        classes,
        folds: records,
        mean_accuracy: mean,
        std_accuracy: std,
        checks: target_check("graph.accuracy", mean, cfg.target_accuracy, cfg.tolerance),
    })
}

/// Default search space for graph classification: filters, filter size,
/// front width, dropout, hops, `t` and pooling.
pub fn graph_grid() -> Vec<GridAxis> {
    let axis = |key: &str, values: Vec<Value>| GridAxis {
        key: key.into(),
        values,
    };
    use serde_json::json;
    vec![
        axis("model.filters", vec![json!(3), json!(4), json!(8), json!(16)]),
        axis("model.filter_nodes", vec![json!(4), json!(8), json!(10), json!(16)]),
        axis("model.front_sizes", vec![json!([4]), json!([8]), json!([16]), json!([32])]),
        axis("model.dropout", vec![json!(0.0), json!(0.2), json!(0.4)]),
        axis("model.hop_radius", vec![json!(1), json!(2)]),
        axis("model.t", vec![json!(1), json!(2), json!(3)]),
        axis("model.pooling", vec![json!("add"), json!("mean")]),
    ]
}

/// Default search space for node classification.
pub fn node_grid() -> Vec<GridAxis> {
    use serde_json::json;
    let axis = |key: &str, values: Vec<Value>| GridAxis {
        key: key.into(),
        values,
    };
    vec![
        axis("model.front_sizes", vec![json!([8]), json!([16]), json!([32]), json!([64])]),
        axis("model.filters", vec![json!(3), json!(5), json!(6), json!(7)]),
        axis("model.filter_nodes", vec![json!(4), json!(6), json!(8), json!(16), json!(32), json!(80)]),
        axis("model.hop_radius", vec![json!(1), json!(2)]),
        axis("model.t", vec![json!(1), json!(2), json!(3)]),
    ]
}
