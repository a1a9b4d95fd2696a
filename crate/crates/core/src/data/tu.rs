use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::remap_labels;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Graphs loaded from the TU multi-file text layout.
#[derive(Clone, Debug)]
pub struct TuDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    /// Dense labels `0..C`.
    pub labels: Vec<usize>,
    /// Original label value of each dense label.
    pub label_values: Vec<i64>,
}

impl TuDataset {
    pub fn classes(&self) -> usize {
        self.label_values.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::dim)
    }
}

struct Lines {
    path: PathBuf,
    lines: Vec<(usize, String)>,
}

impl Lines {
    fn read(path: PathBuf) -> Result<Self> {
        let text = fs::read_to_string(&path)?;
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Ok(Self { path, lines })
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn values<T: std::str::FromStr>(&self) -> Result<Vec<(usize, Vec<T>)>> {
        self.lines
            .iter()
            .map(|(no, l)| {
                l.split(',')
                    .map(|tok| tok.trim().parse::<T>().map_err(|_| self.error(*no, format!("cannot parse '{}'", tok.trim()))))
                    .collect::<Result<Vec<T>>>()
                    .map(|v| (*no, v))
            })
            .collect()
    }

    fn scalars<T: std::str::FromStr + Copy>(&self) -> Result<Vec<(usize, T)>> {
        self.values::<T>()?
            .into_iter()
            .map(|(no, v)| match v.as_slice() {
                [x] => Ok((no, *x)),
                _ => Err(self.error(no, format!("expected one value, found {}", v.len()))),
            })
            .collect()
    }
}

/// Loads `DS_A.txt`, `DS_graph_indicator.txt`, `DS_graph_labels.txt` and
/// the optional `DS_node_labels.txt` / `DS_node_attributes.txt` from `dir`,
/// where `DS` is the directory name.
///
/// Node features are the attributes (if present) followed by one-hot node
/// labels (if present); with neither, every node gets the scalar 1.0.
/// Edges are undirected and deduplicated; self-loops are dropped.
pub fn load_tudataset(dir: &Path) -> Result<TuDataset> {
    let name = dir
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::data(format!("cannot derive dataset name from {}", dir.display())))?
        .to_string();
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));

    let indicator = Lines::read(file("graph_indicator"))?;
    let graph_of: Vec<(usize, i64)> = indicator.scalars::<i64>()?;
    let n_nodes = graph_of.len();
    let mut starts = Vec::new();
    let mut expected = 1i64;
    for (i, &(no, g)) in graph_of.iter().enumerate() {
        if g == expected {
            starts.push(i);
            expected += 1;
        } else if g != expected - 1 {
            return Err(indicator.error(no, format!("graph indicator {g} breaks contiguity (expected {} or {expected})", expected - 1)));
        }
    }
    let n_graphs = starts.len();
    starts.push(n_nodes);

    let label_lines = Lines::read(file("graph_labels"))?;
    let raw_labels = label_lines.scalars::<i64>()?;
    if raw_labels.len() != n_graphs {
        let line = raw_labels.last().map_or(1, |l| l.0);
        return Err(label_lines.error(line, format!("{} graph labels for {n_graphs} graphs", raw_labels.len())));
    }
    let (labels, label_values) = remap_labels(&raw_labels.iter().map(|l| l.1).collect::<Vec<_>>());

    let attr_path = file("node_attributes");
    let attributes = if attr_path.exists() {
        let lines = Lines::read(attr_path)?;
        let rows = lines.values::<f64>()?;
        if rows.len() != n_nodes {
            return Err(lines.error(rows.last().map_or(1, |r| r.0), format!("{} attribute rows for {n_nodes} nodes", rows.len())));
        }
        let width = rows.first().map_or(0, |r| r.1.len());
        if let Some((no, r)) = rows.iter().find(|r| r.1.len() != width) {
            return Err(lines.error(*no, format!("expected {width} attributes, found {}", r.len())));
        }
        Some((width, rows.into_iter().map(|r| r.1).collect::<Vec<_>>()))
    } else {
        None
    };

    let node_label_path = file("node_labels");
    let node_labels = if node_label_path.exists() {
        let lines = Lines::read(node_label_path)?;
        let raw = lines.values::<i64>()?;
        if raw.len() != n_nodes {
            return Err(lines.error(raw.last().map_or(1, |r| r.0), format!("{} node labels for {n_nodes} nodes", raw.len())));
        }
        // Multi-column node labels use the first column.
        let (dense, values) = remap_labels(&raw.iter().map(|r| r.1[0]).collect::<Vec<_>>());
        Some((values.len(), dense))
    } else {
        None
    };

    let dim = match (&attributes, &node_labels) {
        (None, None) => 1,
        (a, l) => a.as_ref().map_or(0, |a| a.0) + l.as_ref().map_or(0, |l| l.0),
    };
    let feature_row = |v: usize| -> Vec<f64> {
        if attributes.is_none() && node_labels.is_none() {
            return vec![1.0];
        }
        let mut row = Vec::with_capacity(dim);
        if let Some((_, rows)) = &attributes {
            row.extend_from_slice(&rows[v]);
        }
        if let Some((c, dense)) = &node_labels {
            let mut one_hot = vec![0.0; *c];
            one_hot[dense[v]] = 1.0;
            row.extend(one_hot);
        }
        row
    };

    let edge_lines = Lines::read(file("A"))?;
    let mut edges: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); n_graphs];
    for (no, pair) in edge_lines.values::<usize>()? {
        let [a, b] = pair[..] else {
            return Err(edge_lines.error(no, format!("expected an edge pair, found {} values", pair.len())));
        };
        for v in [a, b] {
            if v == 0 || v > n_nodes {
                return Err(edge_lines.error(no, format!("dangling node index {v} (nodes are 1..={n_nodes})")));
            }
        }
        let (a, b) = (a - 1, b - 1);
        let (ga, gb) = (graph_of[a].1, graph_of[b].1);
        if ga != gb {
            return Err(edge_lines.error(no, format!("edge joins graphs {ga} and {gb}")));
        }
        if a == b {
            continue;
        }
        let g = (ga - 1) as usize;
        let base = starts[g];
        edges[g].insert((a.min(b) - base, a.max(b) - base));
    }

    let graphs = (0..n_graphs)
        .map(|g| {
            let (lo, hi) = (starts[g], starts[g + 1]);
            let n = hi - lo;
            let mut f = DMatrix::zeros(n, dim);
            for v in 0..n {
                for (k, x) in feature_row(lo + v).into_iter().enumerate() {
                    f[(v, k)] = x;
                }
            }
            let edge_list: Vec<(usize, usize)> = edges[g].iter().copied().collect();
            Graph::from_edges(n, &edge_list, f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TuDataset {
        name,
        graphs,
        labels,
        label_values,
    })
}
