use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{extract_subgraph, Graph, NodeCentricSubgraph, TruncationPolicy};
use crate::omk::{check_tau, greedy_from_matrix, similarity_matrix, Matching};
use crate::train::filter::GraphFilter;
use crate::tse::{encode_parts, level_matrices, SubgraphEmbedding};

/// Shape and kernel settings shared by every filter of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerShape {
    pub filters: usize,
    pub filter_nodes: usize,
    pub t: usize,
    pub tau: f64,
    pub hop_radius: usize,
    /// Standardized subgraph size; defaults to `filter_nodes`.
    pub size: Option<usize>,
}

impl LayerShape {
    pub fn standard_size(&self) -> usize {
        self.size.unwrap_or(self.filter_nodes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 {
            return Err(Error::config("a layer needs at least one filter"));
        }
        if self.filter_nodes == 0 {
            return Err(Error::config("filters need at least one node"));
        }
        if self.hop_radius == 0 {
            return Err(Error::config("hop radius must be at least 1"));
        }
        if self.standard_size() < self.filter_nodes {
            return Err(Error::config(format!(
                "standard size {} is smaller than the filter size {}",
                self.standard_size(),
                self.filter_nodes
            )));
        }
        check_tau(self.tau)
    }
}

/// A filter ready for matching: padded to the standard size and encoded.
#[derive(Clone, Debug)]
pub struct PreparedFilter {
    pub graph: Graph,
    pub levels: Vec<DMatrix<f64>>,
    pub embedding: SubgraphEmbedding,
    /// Node count before padding.
    pub nodes: usize,
}

impl PreparedFilter {
    pub fn new(filter: &GraphFilter, m: usize, t: usize) -> Result<Self> {
        let graph = filter.padded_graph(m)?;
        let levels = level_matrices(graph.adjacency(), graph.features(), t);
        let embedding = SubgraphEmbedding::from_levels(&levels)?;
        Ok(Self {
            graph,
            levels,
            embedding,
            nodes: filter.nodes(),
        })
    }
}

/// One kernel-convolution layer: every node-centric subgraph is compared
/// with every filter, giving a length-`T` response vector per node.
#[derive(Clone, Debug, PartialEq)]
pub struct GomkcnLayer {
    pub filters: Vec<GraphFilter>,
    pub t: usize,
    pub tau: f64,
    pub hop_radius: usize,
    pub size: usize,
    pub truncation: TruncationPolicy,
}

impl GomkcnLayer {
    pub fn new(filters: Vec<GraphFilter>, t: usize, tau: f64, hop_radius: usize, size: usize, truncation: TruncationPolicy) -> Result<Self> {
        let first = filters.first().ok_or_else(|| Error::config("a layer needs at least one filter"))?;
        if filters.iter().any(|f| f.nodes() != first.nodes() || f.dim() != first.dim()) {
            return Err(Error::shape("all filters of a layer must share node count and feature dimension"));
        }
        let shape = LayerShape {
            filters: filters.len(),
            filter_nodes: first.nodes(),
            t,
            tau,
            hop_radius,
            size: Some(size),
        };
        shape.validate()?;
        Ok(Self {
            filters,
            t,
            tau,
            hop_radius,
            size,
            truncation,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        shape: &LayerShape,
        dim: usize,
        bounded_features: bool,
        truncation: TruncationPolicy,
        rng: &mut R,
    ) -> Result<Self> {
        shape.validate()?;
        let filters = (0..shape.filters)
            .map(|_| GraphFilter::random(shape.filter_nodes, dim, bounded_features, rng))
            .collect();
        Self::new(filters, shape.t, shape.tau, shape.hop_radius, shape.standard_size(), truncation)
    }

    pub fn filter_count(&self) -> usize {
        self.filters.len()
    }

    pub fn dim(&self) -> usize {
        self.filters[0].dim()
    }

    pub fn filter_nodes(&self) -> usize {
        self.filters[0].nodes()
    }

    pub fn prepare(&self) -> Result<Vec<PreparedFilter>> {
        self.filters.iter().map(|f| PreparedFilter::new(f, self.size, self.t)).collect()
    }

    /// Node-centric subgraphs of every node of `g`, in node order.
    pub fn extract(&self, g: &Graph) -> Result<Vec<NodeCentricSubgraph>> {
        (0..g.n())
            .into_par_iter()
            .map(|u| extract_subgraph(g, u, self.hop_radius, self.size, self.truncation))
            .collect()
    }

    /// `z[j] = κ(sub, γ_j)` under greedy matching.
    pub fn forward_representation(&self, sub: &NodeCentricSubgraph) -> Result<Vec<f64>> {
        if sub.size() != self.size {
            return Err(Error::shape(format!(
                "subgraph has {} nodes, layer expects {}",
                sub.size(),
                self.size
            )));
        }
        if sub.graph.dim() != self.dim() {
            return Err(Error::shape(format!(
                "subgraph features have dimension {}, filters {}",
                sub.graph.dim(),
                self.dim()
            )));
        }
        let emb = encode_parts(sub.graph.adjacency(), sub.graph.features(), self.t);
        let prepared = self.prepare()?;
        Ok(respond(&prepared, &emb, self.tau)?.into_iter().map(|m| m.total()).collect())
    }
}

/// Greedy matchings of one subgraph embedding against every prepared filter.
pub(crate) fn respond(prepared: &[PreparedFilter], emb: &SubgraphEmbedding, tau: f64) -> Result<Vec<Matching>> {
    prepared
        .iter()
        .map(|p| Ok(greedy_from_matrix(&similarity_matrix(emb, &p.embedding, tau)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::omk::{gomk, Matcher};

    #[test]
    fn single_filter_equals_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], DMatrix::from_fn(5, 2, |i, j| (i + j) as f64 / 6.0)).unwrap();
        let layer = GomkcnLayer::random(
            &LayerShape {
                filters: 1,
                filter_nodes: 3,
                t: 2,
                tau: 0.5,
                hop_radius: 1,
                size: None,
            },
            2,
            true,
            TruncationPolicy::Deterministic,
            &mut rng,
        )
        .unwrap();
        let subs = layer.extract(&g).unwrap();
        for sub in &subs {
            let z = layer.forward_representation(sub).unwrap();
            let k = gomk(&sub.graph, &layer.filters[0].graph(), 2, 0.5, Matcher::Greedy).unwrap();
            assert_eq!(z, vec![k.kappa]);
        }
    }

    #[test]
    fn filter_equal_to_subgraph_hits_the_constant() {
        let g = Graph::from_edges(3, &[(0, 1), (0, 2)], DMatrix::from_row_slice(3, 1, &[0.2, 0.5, 0.9])).unwrap();
        let sub = extract_subgraph(&g, 0, 1, 3, TruncationPolicy::Deterministic).unwrap();
        let filter = GraphFilter::from_graph(&sub.graph, true);
        let layer = GomkcnLayer::new(vec![filter], 3, 1.0, 1, 3, TruncationPolicy::Deterministic).unwrap();
        assert_eq!(layer.forward_representation(&sub).unwrap(), vec![12.0]);
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Graph::from_edges(3, &[(0, 1)], DMatrix::zeros(3, 2)).unwrap();
        let sub = extract_subgraph(&g, 0, 1, 3, TruncationPolicy::Deterministic).unwrap();
        let layer = GomkcnLayer::new(vec![GraphFilter::random(3, 1, true, &mut rng)], 1, 1.0, 1, 3, TruncationPolicy::Deterministic).unwrap();
        assert!(matches!(layer.forward_representation(&sub), Err(Error::Shape(_))));
    }
}
