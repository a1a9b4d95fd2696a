use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::FilterGradient;
use crate::graph::Graph;

/// A trainable graph: the strict upper triangle of its adjacency and its
/// node features are free parameters. The adjacency is mirrored on
/// materialization, so symmetry and the zero diagonal hold by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFilter {
    nodes: usize,
    dim: usize,
    /// Row-major strict upper triangle, `(0,1), (0,2), .., (n-2,n-1)`.
    upper: Vec<f64>,
    /// Row-major `n × d`.
    features: Vec<f64>,
    bounded_features: bool,
}

impl GraphFilter {
    /// Adjacency weights ~ U(0.3, 0.7); features ~ U(0, 1).
    pub fn random<R: Rng + ?Sized>(nodes: usize, dim: usize, bounded_features: bool, rng: &mut R) -> Self {
        let upper = (0..nodes * nodes.saturating_sub(1) / 2)
            .map(|_| rng.random_range(0.3..0.7))
            .collect();
        let features = (0..nodes * dim).map(|_| rng.random::<f64>()).collect();
        Self {
            nodes,
            dim,
            upper,
            features,
            bounded_features,
        }
    }

    pub fn from_graph(g: &Graph, bounded_features: bool) -> Self {
        let n = g.n();
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                upper.push(g.adjacency()[(i, j)]);
            }
        }
        let features = (0..n).flat_map(|i| g.features().row(i).iter().copied().collect::<Vec<_>>()).collect();
        Self {
            nodes: n,
            dim: g.dim(),
            upper,
            features,
            bounded_features,
        }
    }

    /// Rebuilds a filter from dense matrices, e.g. when loading a checkpoint.
    pub fn from_matrices(adjacency: &[Vec<f64>], features: &[Vec<f64>], bounded_features: bool) -> Result<Self> {
        let n = adjacency.len();
        if features.len() != n || adjacency.iter().any(|r| r.len() != n) {
            return Err(Error::shape("filter adjacency/features disagree on node count"));
        }
        let dim = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != dim) {
            return Err(Error::shape("ragged filter feature rows"));
        }
        let a = DMatrix::from_fn(n, n, |i, j| adjacency[i][j]);
        let f = DMatrix::from_fn(n, dim, |i, j| features[i][j]);
        Ok(Self::from_graph(&Graph::new(a, f)?, bounded_features))
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounded_features(&self) -> bool {
        self.bounded_features
    }

    pub fn param_count(&self) -> usize {
        self.upper.len() + self.features.len()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.nodes;
        let mut a = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                a[(i, j)] = self.upper[k];
                a[(j, i)] = self.upper[k];
                k += 1;
            }
        }
        a
    }

    pub fn features(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nodes, self.dim, &self.features)
    }

    /// The filter as a graph. Weights may leave `[0, 1]` only transiently
    /// (e.g. during finite-difference probes), so no validation happens here.
    pub fn graph(&self) -> Graph {
        Graph::from_parts_unchecked(self.adjacency(), self.features())
    }

    /// The filter padded with isolated zero-feature nodes up to `m` nodes.
    pub fn padded_graph(&self, m: usize) -> Result<Graph> {
        if m < self.nodes {
            return Err(Error::shape(format!(
                "filter has {} nodes, more than the standard size {m}",
                self.nodes
            )));
        }
        let mut a = DMatrix::zeros(m, m);
        a.view_mut((0, 0), (self.nodes, self.nodes)).copy_from(&self.adjacency());
        let mut f = DMatrix::zeros(m, self.dim);
        f.view_mut((0, 0), (self.nodes, self.dim)).copy_from(&self.features());
        Ok(Graph::from_parts_unchecked(a, f))
    }

    /// Parameters flattened as upper triangle then features.
    pub fn to_params(&self) -> Vec<f64> {
        self.upper.iter().chain(&self.features).copied().collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} parameters for a filter with {}",
                params.len(),
                self.param_count()
            )));
        }
        let (u, f) = params.split_at(self.upper.len());
        self.upper.copy_from_slice(u);
        self.features.copy_from_slice(f);
        Ok(())
    }

    /// Flattens a gradient in the same order as [`to_params`](Self::to_params).
    pub fn gradient_to_params(&self, grad: &FilterGradient) -> Vec<f64> {
        let n = self.nodes;
        let mut out = Vec::with_capacity(self.param_count());
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(grad.d_adjacency[(i, j)]);
            }
        }
        for i in 0..n {
            for k in 0..self.dim {
                out.push(grad.d_features[(i, k)]);
            }
        }
        out
    }

    pub(crate) fn param_slices_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.upper, &mut self.features)
    }

    /// Clamps weights (and bounded features) back into `[0, 1]`.
    pub fn project(&mut self) {
        for w in &mut self.upper {
            *w = w.clamp(0.0, 1.0);
        }
        if self.bounded_features {
            for f in &mut self.features {
                *f = f.clamp(0.0, 1.0);
            }
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.upper.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invariant("filter weight outside [0, 1]"));
        }
        if self.bounded_features && self.features.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invariant("bounded filter feature outside [0, 1]"));
        }
        if self.features.iter().any(|f| !f.is_finite()) {
            return Err(Error::invariant("non-finite filter feature"));
        }
        Ok(())
    }

    /// Edges whose weight exceeds `threshold`.
    pub fn thresholded_edges(&self, threshold: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut k = 0;
        for i in 0..self.nodes {
            for j in (i + 1)..self.nodes {
                if self.upper[k] > threshold {
                    out.push((i, j));
                }
                k += 1;
            }
        }
        out
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let n = self.nodes;
        self.upper[a * n - a * (a + 1) / 2 + (b - a - 1)]
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn init_ranges_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = GraphFilter::random(6, 3, true, &mut rng);
        let a = f.adjacency();
        for i in 0..6 {
            assert_eq!(a[(i, i)], 0.0);
            for j in 0..6 {
                assert_eq!(a[(i, j)], a[(j, i)]);
                assert_eq!(a[(i, j)], f.weight(i, j));
                if i != j {
                    assert!((0.3..0.7).contains(&a[(i, j)]));
                }
            }
        }
        f.check_invariants().unwrap();
    }

    #[test]
    fn projection_restores_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut f = GraphFilter::random(3, 2, true, &mut rng);
        let mut p = f.to_params();
        p[0] = 1.7;
        p[1] = -0.2;
        p[4] = 3.0;
        f.set_params(&p).unwrap();
        assert!(f.check_invariants().is_err());
        f.project();
        f.check_invariants().unwrap();
        assert_eq!(f.weight(0, 1), 1.0);
        assert_eq!(f.weight(0, 2), 0.0);
    }

    #[test]
    fn padding_appends_isolated_zero_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = GraphFilter::random(2, 2, true, &mut rng);
        let g = f.padded_graph(4).unwrap();
        assert_eq!(g.n(), 4);
        assert!(g.adjacency().row(3).iter().all(|&v| v == 0.0));
        assert!(g.features().row(2).iter().all(|&v| v == 0.0));
        assert!(f.padded_graph(1).is_err());
    }
}
