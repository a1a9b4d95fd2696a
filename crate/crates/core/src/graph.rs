//! Dense undirected graphs, node-centric subgraph extraction and size
//! standardization.
//!
//! Both data graphs and trainable filters share the [`Graph`] shape: a
//! symmetric, zero-diagonal adjacency with weights in `[0, 1]` plus an
//! `n × d` feature matrix. A [`NodeCentricSubgraph`] is the BFS ball of
//! radius `k` around a center, relabeled so the center is node 0 and the
//! remaining nodes follow BFS discovery order, then truncated or padded with
//! isolated zero-feature nodes to exactly `m` nodes.

use std::collections::{HashSet, VecDeque};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An undirected weighted graph with node features.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: DMatrix<f64>,
    features: DMatrix<f64>,
    node_ids: Option<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, validating symmetry, the zero diagonal, the `[0, 1]`
    /// weight range and the feature row count.
    pub fn new(adjacency: DMatrix<f64>, features: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::shape(format!(
                "adjacency must be square, got {}x{}",
                n,
                adjacency.ncols()
            )));
        }
        if features.nrows() != n {
            return Err(Error::shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                n
            )));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::invariant(format!("self-loop at node {i}")));
            }
            for j in (i + 1)..n {
                let w = adjacency[(i, j)];
                if w != adjacency[(j, i)] {
                    return Err(Error::invariant(format!(
                        "adjacency not symmetric at ({i}, {j})"
                    )));
                }
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::invariant(format!(
                        "edge weight {w} at ({i}, {j}) outside [0, 1]"
                    )));
                }
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invariant("non-finite feature value"));
        }
        Ok(Self::from_parts_unchecked(adjacency, features))
    }

    /// Builds a graph from matrices that are already known to be valid.
    pub(crate) fn from_parts_unchecked(adjacency: DMatrix<f64>, features: DMatrix<f64>) -> Self {
        let n = adjacency.nrows();
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| adjacency[(i, j)] != 0.0).collect())
            .collect();
        Self {
            adjacency,
            features,
            node_ids: None,
            neighbors,
        }
    }

    /// Builds a binary graph from an undirected edge list. Repeated and
    /// reversed pairs collapse into one edge.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], features: DMatrix<f64>) -> Result<Self> {
        let mut adjacency = DMatrix::zeros(n, n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::index(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::invariant(format!("self-loop at node {u}")));
            }
            adjacency[(u, v)] = 1.0;
            adjacency[(v, u)] = 1.0;
        }
        Self::new(adjacency, features)
    }

    pub fn with_node_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(Error::shape(format!(
                "{} node ids for {} nodes",
                ids.len(),
                self.n()
            )));
        }
        self.node_ids = Some(ids);
        Ok(self)
    }

    /// Pads with isolated zero-feature nodes up to `m` nodes.
    pub fn padded(&self, m: usize) -> Result<Self> {
        let n = self.n();
        if m < n {
            return Err(Error::shape(format!("cannot pad a {n}-node graph down to {m} nodes")));
        }
        let mut a = DMatrix::zeros(m, m);
        a.view_mut((0, 0), (n, n)).copy_from(&self.adjacency);
        let mut f = DMatrix::zeros(m, self.dim());
        f.view_mut((0, 0), (n, self.dim())).copy_from(&self.features);
        Ok(Self::from_parts_unchecked(a, f))
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn node_ids(&self) -> Option<&[usize]> {
        self.node_ids.as_deref()
    }

    /// Nodes adjacent to `u`, ascending.
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    /// Undirected edges `(i, j)` with `i < j` and their weights.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for &j in &self.neighbors[i] {
                if j > i {
                    out.push((i, j, self.adjacency[(i, j)]));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Same topology with a replacement feature matrix.
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != self.n() {
            return Err(Error::shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                self.n()
            )));
        }
        Ok(Self {
            adjacency: self.adjacency.clone(),
            features,
            node_ids: self.node_ids.clone(),
            neighbors: self.neighbors.clone(),
        })
    }

    /// Breadth-first ball of radius `k` around `u`: `(node, hop)` pairs in
    /// discovery order, neighbors visited in ascending index order.
    pub fn bfs_ball(&self, u: usize, k: usize) -> Result<Vec<(usize, usize)>> {
        if u >= self.n() {
            return Err(Error::index(format!(
                "center {u} out of range for {} nodes",
                self.n()
            )));
        }
        let mut seen = vec![false; self.n()];
        let mut order = vec![(u, 0)];
        let mut queue = VecDeque::from([(u, 0usize)]);
        seen[u] = true;
        while let Some((v, hop)) = queue.pop_front() {
            if hop == k {
                continue;
            }
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    order.push((w, hop + 1));
                    queue.push_back((w, hop + 1));
                }
            }
        }
        Ok(order)
    }
}

/// How to shrink a BFS ball that exceeds the standard size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruncationPolicy {
    /// Drop nodes in reverse discovery order (farthest, latest first).
    #[default]
    Deterministic,
    /// Drop uniformly random nodes from the outermost remaining hop. The
    /// stream is seeded per center, so extraction stays reproducible.
    SeededRandom { seed: u64 },
}

/// A `k`-hop subgraph around `center`, standardized to `m` nodes.
#[derive(Clone, Debug)]
pub struct NodeCentricSubgraph {
    pub center: usize,
    pub hop_radius: usize,
    pub real_node_count: usize,
    /// Parent-graph index of each real node; `nodes[0] == center`.
    pub nodes: Vec<usize>,
    pub graph: Graph,
}

impl NodeCentricSubgraph {
    /// Standardized size `m`.
    pub fn size(&self) -> usize {
        self.graph.n()
    }

    /// Rebuilds the subgraph's feature matrix from a parent-graph feature
    /// matrix (for instance after a learned transform); padding rows stay 0.
    pub fn gather_features(&self, parent_features: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.size();
        let d = parent_features.ncols();
        let mut out = DMatrix::zeros(m, d);
        for (row, &node) in self.nodes.iter().enumerate() {
            out.row_mut(row).copy_from(&parent_features.row(node));
        }
        out
    }
}

/// Extracts the standardized `k`-hop subgraph centered on `u`.
pub fn extract_subgraph(
    g: &Graph,
    u: usize,
    k: usize,
    m: usize,
    policy: TruncationPolicy,
) -> Result<NodeCentricSubgraph> {
    if m < 1 {
        return Err(Error::config("standard subgraph size m must be at least 1"));
    }
    if k < 1 {
        return Err(Error::config("hop radius k must be at least 1"));
    }
    let mut ball = g.bfs_ball(u, k)?;
    if ball.len() > m {
        match policy {
            TruncationPolicy::Deterministic => ball.truncate(m),
            TruncationPolicy::SeededRandom { seed } => {
                ball = truncate_randomly(ball, m, seed ^ (u as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            }
        }
    }
    let nodes: Vec<usize> = ball.iter().map(|&(v, _)| v).collect();
    let real = nodes.len();
    let d = g.dim();
    let mut adjacency = DMatrix::zeros(m, m);
    let mut features = DMatrix::zeros(m, d);
    for (i, &vi) in nodes.iter().enumerate() {
        features.row_mut(i).copy_from(&g.features().row(vi));
        for (j, &vj) in nodes.iter().enumerate().skip(i + 1) {
            let w = g.adjacency()[(vi, vj)];
            adjacency[(i, j)] = w;
            adjacency[(j, i)] = w;
        }
    }
    Ok(NodeCentricSubgraph {
        center: u,
        hop_radius: k,
        real_node_count: real,
        nodes,
        graph: Graph::from_parts_unchecked(adjacency, features),
    })
}

fn truncate_randomly(mut ball: Vec<(usize, usize)>, m: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while ball.len() > m {
        let outer = ball.iter().map(|&(_, h)| h).max().unwrap_or(0);
        let mut outer_pos: Vec<usize> = (0..ball.len()).filter(|&i| ball[i].1 == outer).collect();
        let excess = ball.len() - m;
        outer_pos.shuffle(&mut rng);
        let mut drop: Vec<usize> = outer_pos.into_iter().take(excess).collect();
        drop.sort_unstable_by(|a, b| b.cmp(a));
        for i in drop {
            ball.remove(i);
        }
    }
    ball
}

/// Edges of `g` with both endpoints in `nodes`, as pairs of positions in
/// `nodes` (so the result describes the induced subgraph on `0..nodes.len()`).
pub fn induced_edges(g: &Graph, nodes: &[usize]) -> Result<Vec<(usize, usize)>> {
    let mut seen = HashSet::with_capacity(nodes.len());
    for &v in nodes {
        if v >= g.n() {
            return Err(Error::index(format!("node {v} out of range for {} nodes", g.n())));
        }
        if !seen.insert(v) {
            return Err(Error::index(format!("duplicate node {v}")));
        }
    }
    let mut out = Vec::new();
    for (i, &a) in nodes.iter().enumerate() {
        for (j, &b) in nodes.iter().enumerate().skip(i + 1) {
            if g.adjacency()[(a, b)] != 0.0 {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

/// On-disk graph bundle: binary symmetric edges plus features and optional
/// labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphBundle {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl GraphBundle {
    pub fn from_graph(g: &Graph, labels: Option<Vec<usize>>) -> Self {
        let features = (0..g.n())
            .map(|i| g.features().row(i).iter().copied().collect())
            .collect();
        let edges = g.edges().into_iter().map(|(i, j, _)| [i, j]).collect();
        Self {
            n: g.n(),
            edges,
            features,
            labels,
        }
    }

    pub fn to_graph(&self) -> Result<Graph> {
        if self.features.len() != self.n {
            return Err(Error::shape(format!(
                "bundle has {} feature rows for {} nodes",
                self.features.len(),
                self.n
            )));
        }
        let d = self.features.first().map_or(0, Vec::len);
        if self.features.iter().any(|r| r.len() != d) {
            return Err(Error::shape("ragged feature rows in bundle"));
        }
        let features = DMatrix::from_fn(self.n, d, |i, j| self.features[i][j]);
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::from_edges(self.n, &edges, features)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path5() -> Graph {
        let f = DMatrix::from_fn(5, 1, |i, _| i as f64 / 4.0);
        Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], f).unwrap()
    }

    #[test]
    fn rejects_asymmetric_and_self_loops() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = 1.0;
        let f = DMatrix::zeros(2, 1);
        assert!(matches!(Graph::new(a.clone(), f.clone()), Err(Error::Invariant(_))));
        a[(1, 0)] = 1.0;
        a[(0, 0)] = 0.5;
        assert!(matches!(Graph::new(a, f), Err(Error::Invariant(_))));
    }

    #[test]
    fn path_center_one_hop() {
        let g = path5();
        let s = extract_subgraph(&g, 2, 1, 3, TruncationPolicy::Deterministic).unwrap();
        assert_eq!(s.nodes, vec![2, 1, 3]);
        assert_eq!(s.real_node_count, 3);
        let a = s.graph.adjacency();
        assert_eq!(a[(0, 1)], 1.0);
        assert_eq!(a[(0, 2)], 1.0);
        assert_eq!(a[(1, 2)], 0.0);
    }

    #[test]
    fn path_end_gets_padding() {
        let g = path5();
        let s = extract_subgraph(&g, 0, 1, 3, TruncationPolicy::Deterministic).unwrap();
        assert_eq!(s.nodes, vec![0, 1]);
        assert_eq!(s.real_node_count, 2);
        assert_eq!(s.size(), 3);
        assert!(s.graph.features().row(2).iter().all(|&v| v == 0.0));
        assert!(s.graph.adjacency().row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padding_appends_isolated_zero_nodes() {
        let p = path5().padded(7).unwrap();
        assert_eq!(p.n(), 7);
        assert_eq!(p.edge_count(), 4);
        assert!(p.features().row(6).iter().all(|&v| v == 0.0));
        assert!(path5().padded(4).is_err());
    }

    #[test]
    fn truncation_keeps_center_and_nearest() {
        let g = path5();
        let s = extract_subgraph(&g, 2, 2, 3, TruncationPolicy::Deterministic).unwrap();
        assert_eq!(s.nodes, vec![2, 1, 3]);
        let r = extract_subgraph(&g, 2, 2, 4, TruncationPolicy::SeededRandom { seed: 7 }).unwrap();
        assert_eq!(&r.nodes[..3], &[2, 1, 3]);
        assert!(r.nodes[3] == 0 || r.nodes[3] == 4);
        let again = extract_subgraph(&g, 2, 2, 4, TruncationPolicy::SeededRandom { seed: 7 }).unwrap();
        assert_eq!(r.nodes, again.nodes);
    }

    #[test]
    fn extraction_errors() {
        let g = path5();
        assert!(matches!(
            extract_subgraph(&g, 5, 1, 3, TruncationPolicy::Deterministic),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            extract_subgraph(&g, 0, 1, 0, TruncationPolicy::Deterministic),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn induced_edges_basics() {
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)], DMatrix::zeros(3, 1)).unwrap();
        assert_eq!(induced_edges(&tri, &[0, 1]).unwrap(), vec![(0, 1)]);
        assert_eq!(induced_edges(&tri, &[2, 0]).unwrap(), vec![(0, 1)]);
        assert!(induced_edges(&tri, &[]).unwrap().is_empty());
        assert!(matches!(induced_edges(&tri, &[1, 1]), Err(Error::Index(_))));
    }

    #[test]
    fn bundle_round_trip() {
        let g = path5();
        let b = GraphBundle::from_graph(&g, Some(vec![0, 1, 0, 1, 0]));
        let text = serde_json::to_string(&b).unwrap();
        let back: GraphBundle = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_graph().unwrap().adjacency(), g.adjacency());
        assert_eq!(back.labels, b.labels);
    }
}
