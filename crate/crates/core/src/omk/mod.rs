//! Optimal matching kernel over sets of subtree embeddings.
//!
//! Two graphs are compared by pairing their node subtrees injectively and
//! summing the solid similarities of the paired subtrees; everything that is
//! left unmatched contributes nothing. Production code matches greedily;
//! the exact Kuhn–Munkres matcher serves as an oracle and an opt-in mode.

mod gram;
mod matching;
mod similarity;

pub use gram::{element_gram, feature_map_oracle, ElementGram, FeatureMapVectors, HierarchicalTree, TreeNodeKind};
pub use matching::{greedy_from_matrix, optimal_from_matrix, Matcher, Matching};
pub use similarity::{self_similarities, similarity_matrix, solid_similarity};

pub(crate) use similarity::{check_tau, similarity_unchecked};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tse::{encode, SubgraphEmbedding};

/// Greedy matching of `x` against `y`: each `x` node, in index order, takes
/// the most similar `y` node that is still free.
pub fn greedy_match(x: &SubgraphEmbedding, y: &SubgraphEmbedding, tau: f64) -> Result<Matching> {
    Ok(greedy_from_matrix(&similarity_matrix(x, y, tau)?))
}

/// Maximum-similarity matching of `x` against `y`.
pub fn optimal_match(x: &SubgraphEmbedding, y: &SubgraphEmbedding, tau: f64) -> Result<Matching> {
    Ok(optimal_from_matrix(&similarity_matrix(x, y, tau)?))
}

/// Kernel value together with the matching that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct KernelValue {
    pub kappa: f64,
    pub matching: Matching,
}

/// Kernel between two embeddings of equal node count.
pub fn kernel_from_embeddings(
    x: &SubgraphEmbedding,
    y: &SubgraphEmbedding,
    tau: f64,
    matcher: Matcher,
) -> Result<KernelValue> {
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "kernel inputs must be standardized to one size, got {} and {} nodes",
            x.len(),
            y.len()
        )));
    }
    let matching = matcher.run(&similarity_matrix(x, y, tau)?);
    Ok(KernelValue {
        kappa: matching.total(),
        matching,
    })
}

/// Graph optimal matching kernel between two standardized graphs.
pub fn gomk(gx: &Graph, gy: &Graph, t: usize, tau: f64, matcher: Matcher) -> Result<KernelValue> {
    if gx.n() != gy.n() {
        return Err(Error::shape(format!(
            "kernel inputs must be standardized to one size, got {} and {} nodes",
            gx.n(),
            gy.n()
        )));
    }
    if gx.dim() != gy.dim() {
        return Err(Error::shape(format!(
            "feature dimensions differ: {} vs {}",
            gx.dim(),
            gy.dim()
        )));
    }
    kernel_from_embeddings(&encode(gx, t), &encode(gy, t), tau, matcher)
}

/// Kernel value with a given (frozen) matching, e.g. for finite-difference
/// probes where the matching must not be recomputed.
pub fn kappa_under_matching(x: &SubgraphEmbedding, y: &SubgraphEmbedding, matching: &Matching, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    similarity::check_compatible(x, y)?;
    matching.validate(x.len(), y.len())?;
    let d = x.dim();
    Ok(matching
        .pairs
        .iter()
        .map(|&(a, b)| similarity_unchecked(x.node(a).as_slice(), y.node(b).as_slice(), d, tau))
        .sum())
}

/// Largest attainable kernel value for size `m`, i.e. `κ(g, g) = m (t + 1)`.
pub fn self_kernel(m: usize, t: usize) -> f64 {
    (m * (t + 1)) as f64
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;

    #[test]
    fn self_kernel_is_constant() {
        let f = DMatrix::from_row_slice(3, 2, &[0.2, 0.4, 0.9, 0.1, 0.0, 0.5]);
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], f).unwrap();
        for t in 0..4 {
            let k = gomk(&g, &g, t, 0.7, Matcher::Greedy).unwrap();
            assert_eq!(k.kappa, self_kernel(3, t));
            assert_eq!(k.matching.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        }
    }

    #[test]
    fn far_apart_features_vanish() {
        let a = Graph::from_edges(2, &[(0, 1)], DMatrix::zeros(2, 1)).unwrap();
        let b = Graph::from_edges(2, &[(0, 1)], DMatrix::from_element(2, 1, 1.0)).unwrap();
        let k = gomk(&a, &b, 1, 0.01, Matcher::Exact).unwrap();
        assert!(k.kappa > 0.0 && k.kappa < 1e-40);
    }

    #[test]
    fn unequal_sizes_are_rejected() {
        let a = Graph::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let b = Graph::new(DMatrix::zeros(3, 3), DMatrix::zeros(3, 1)).unwrap();
        assert!(matches!(gomk(&a, &b, 1, 1.0, Matcher::Greedy), Err(Error::Shape(_))));
    }
}
