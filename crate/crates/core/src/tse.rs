//! t-level subtree encoding.
//!
//! Every node `v` of a graph is described by the stack of level embeddings
//! `(A^0 F)_v, (A^1 F)_v, ..., (A^t F)_v`: level `i` is the edge-weighted sum
//! of the features sitting `i` steps below `v` in its unrolled subtree. The
//! whole graph is the set of these per-node stacks.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Borrowed view of one node's `(t + 1) × d` level stack.
#[derive(Clone, Copy, Debug)]
pub struct SubtreeEmbedding<'a> {
    levels: &'a [f64],
    dim: usize,
}

impl<'a> SubtreeEmbedding<'a> {
    pub fn new(levels: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || !levels.len().is_multiple_of(dim) || levels.is_empty() {
            return Err(Error::shape(format!(
                "{} level values do not split into rows of width {dim}",
                levels.len()
            )));
        }
        Ok(Self { levels, dim })
    }

    /// Number of aggregation steps `t` (so there are `t + 1` levels).
    pub fn t(&self) -> usize {
        self.levels.len() / self.dim - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self, i: usize) -> &'a [f64] {
        &self.levels[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.levels
    }
}

/// Per-node level stacks for every node of a graph, index-aligned with the
/// graph's nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphEmbedding {
    nodes: usize,
    t: usize,
    dim: usize,
    // node-major, then level, then feature
    data: Vec<f64>,
}

impl SubgraphEmbedding {
    /// Assembles an embedding from level matrices `A^i F`, `i = 0..=t`.
    pub fn from_levels(levels: &[DMatrix<f64>]) -> Result<Self> {
        let first = levels
            .first()
            .ok_or_else(|| Error::shape("at least one level is required"))?;
        let (n, d) = first.shape();
        if levels.iter().any(|l| l.shape() != (n, d)) {
            return Err(Error::shape("level matrices disagree in shape"));
        }
        let t = levels.len() - 1;
        let mut data = Vec::with_capacity(n * (t + 1) * d);
        for v in 0..n {
            for level in levels {
                data.extend(level.row(v).iter());
            }
        }
        Ok(Self { nodes: n, t, dim: d, data })
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, v: usize) -> SubtreeEmbedding<'_> {
        let stride = (self.t + 1) * self.dim;
        SubtreeEmbedding {
            levels: &self.data[v * stride..(v + 1) * stride],
            dim: self.dim,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = SubtreeEmbedding<'_>> + '_ {
        (0..self.nodes).map(move |v| self.node(v))
    }

    /// Level `i` for all nodes as an `n × d` matrix.
    pub fn level_matrix(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.nodes, self.dim, |v, k| self.node(v).level(i)[k])
    }
}

/// Level matrices `A^i F` for `i = 0..=t` by iterated multiplication.
pub fn level_matrices(adjacency: &DMatrix<f64>, features: &DMatrix<f64>, t: usize) -> Vec<DMatrix<f64>> {
    let mut levels = Vec::with_capacity(t + 1);
    levels.push(features.clone());
    for i in 0..t {
        let next = adjacency * &levels[i];
        levels.push(next);
    }
    levels
}

/// Encodes every node of `g` as its `t`-level subtree embedding.
pub fn encode(g: &Graph, t: usize) -> SubgraphEmbedding {
    encode_parts(g.adjacency(), g.features(), t)
}

pub(crate) fn encode_parts(adjacency: &DMatrix<f64>, features: &DMatrix<f64>, t: usize) -> SubgraphEmbedding {
    let levels = level_matrices(adjacency, features, t);
    SubgraphEmbedding::from_levels(&levels).expect("level matrices share a shape")
}

/// Outcome of recovering an adjacency matrix from its level embeddings.
#[derive(Clone, Debug, PartialEq)]
pub enum Reconstruction {
    Recovered {
        adjacency: DMatrix<f64>,
        /// Relative residual of `A [c_0 .. c_{t-1}] = [c_1 .. c_t]`.
        residual: f64,
    },
    NotFullRank {
        rank: usize,
        nodes: usize,
    },
}

const RANK_TOLERANCE: f64 = 1e-10;
const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Solves `A c_i = c_{i+1}` for the adjacency `A` given the stacked levels
/// `c_i = A^i F`. The solution is unique when `[c_0 .. c_{t-1}]` has rank `n`;
/// otherwise the rank deficiency is reported instead of a matrix.
pub fn reconstruct_adjacency(emb: &SubgraphEmbedding) -> Result<Reconstruction> {
    let n = emb.len();
    if n == 1 {
        return Ok(Reconstruction::Recovered {
            adjacency: DMatrix::zeros(1, 1),
            residual: 0.0,
        });
    }
    if emb.t() == 0 {
        return Err(Error::config("reconstruction needs at least one aggregation step"));
    }
    let t = emb.t();
    let d = emb.dim();
    // C: n × (t·d) with blocks c_0..c_{t-1}; N: the shifted blocks c_1..c_t.
    let mut c = DMatrix::zeros(n, t * d);
    let mut next = DMatrix::zeros(n, t * d);
    for i in 0..t {
        c.view_mut((0, i * d), (n, d)).copy_from(&emb.level_matrix(i));
        next.view_mut((0, i * d), (n, d)).copy_from(&emb.level_matrix(i + 1));
    }
    // A C = N  <=>  C^T A^T = N^T
    let svd = SVD::new(c.transpose(), true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOLERANCE * smax.max(f64::MIN_POSITIVE))
        .count();
    if rank < n {
        return Ok(Reconstruction::NotFullRank { rank, nodes: n });
    }
    let at = svd
        .solve(&next.transpose(), RANK_TOLERANCE * smax)
        .map_err(|e| Error::invariant(format!("least-squares solve failed: {e}")))?;
    let a = at.transpose();
    let adjacency = (&a + a.transpose()) * 0.5;
    let scale = next.norm().max(f64::MIN_POSITIVE);
    let residual = (&adjacency * &c - &next).norm() / scale;
    if residual > RESIDUAL_TOLERANCE {
        return Ok(Reconstruction::NotFullRank { rank, nodes: n });
    }
    Ok(Reconstruction::Recovered { adjacency, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_levels_are_raw_features() {
        let f = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], f.clone()).unwrap();
        let e = encode(&g, 0);
        for v in 0..3 {
            assert_eq!(e.node(v).as_slice(), f.row(v).iter().copied().collect::<Vec<_>>().as_slice());
        }
    }

    #[test]
    fn alternating_on_single_edge() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let g = Graph::from_edges(2, &[(0, 1)], f).unwrap();
        let e = encode(&g, 2);
        let node0 = e.node(0);
        assert_eq!(node0.level(0), &[1.0, 0.0]);
        assert_eq!(node0.level(1), &[0.0, 1.0]);
        assert_eq!(node0.level(2), &[1.0, 0.0]);
    }

    #[test]
    fn single_node_reconstructs_to_zero() {
        let g = Graph::new(DMatrix::zeros(1, 1), DMatrix::from_element(1, 2, 0.3)).unwrap();
        match reconstruct_adjacency(&encode(&g, 1)).unwrap() {
            Reconstruction::Recovered { adjacency, .. } => assert_eq!(adjacency[(0, 0)], 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn regular_graph_with_equal_features_is_rank_deficient() {
        // 6-cycle, all-ones features: every level is a multiple of the ones vector.
        let edges: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        let g = Graph::from_edges(6, &edges, DMatrix::from_element(6, 3, 1.0)).unwrap();
        assert_eq!(
            reconstruct_adjacency(&encode(&g, 6)).unwrap(),
            Reconstruction::NotFullRank { rank: 1, nodes: 6 }
        );
    }
}
