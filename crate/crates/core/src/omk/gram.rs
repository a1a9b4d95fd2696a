//! Explicit constructions behind the element kernel: its Gram matrix, the
//! hierarchical tree whose lowest-common-ancestor weights reproduce it, and
//! the feature map read off that tree. These are verification tools; the
//! kernel itself never materializes them.

use nalgebra::{DMatrix, SymmetricEigen};

use super::matching::Matching;
use super::similarity::{self_similarities, similarity_unchecked};
use crate::error::{Error, Result};
use crate::tse::SubgraphEmbedding;

/// Gram matrix of the element kernel over `X ∪ Y` (X elements first).
/// Diagonal entries are self-similarities; the only non-zero off-diagonal
/// entries are matched pairs.
#[derive(Clone, Debug)]
pub struct ElementGram {
    pub matrix: DMatrix<f64>,
    pub p: usize,
    pub q: usize,
}

impl ElementGram {
    pub fn build(self_x: &[f64], self_y: &[f64], matching: &Matching) -> Result<Self> {
        let (p, q) = (self_x.len(), self_y.len());
        matching.validate(p, q)?;
        let mut matrix = DMatrix::zeros(p + q, p + q);
        for (i, &s) in self_x.iter().chain(self_y).enumerate() {
            matrix[(i, i)] = s;
        }
        for (&(x, y), &s) in matching.pairs.iter().zip(&matching.pair_similarities) {
            matrix[(x, p + y)] = s;
            matrix[(p + y, x)] = s;
        }
        Ok(Self { matrix, p, q })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.matrix.is_empty() {
            return 0.0;
        }
        SymmetricEigen::new(self.matrix.clone()).eigenvalues.min()
    }
}

/// Element-kernel Gram matrix for two embedded sets under `matching`.
pub fn element_gram(x: &SubgraphEmbedding, y: &SubgraphEmbedding, matching: &Matching, tau: f64) -> Result<ElementGram> {
    let matching = recompute_pair_similarities(x, y, matching, tau)?;
    ElementGram::build(&self_similarities(x), &self_similarities(y), &matching)
}

fn recompute_pair_similarities(x: &SubgraphEmbedding, y: &SubgraphEmbedding, matching: &Matching, tau: f64) -> Result<Matching> {
    super::check_tau(tau)?;
    super::similarity::check_compatible(x, y)?;
    matching.validate(x.len(), y.len())?;
    let d = x.dim();
    let sims = matching
        .pairs
        .iter()
        .map(|&(a, b)| similarity_unchecked(x.node(a).as_slice(), y.node(b).as_slice(), d, tau))
        .collect();
    Ok(Matching {
        pairs: matching.pairs.clone(),
        pair_similarities: sims,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeNodeKind {
    /// Element of `X` (`from_x == true`) or `Y`, by index within its set.
    Leaf { from_x: bool, index: usize },
    /// Joins the two leaves of matched pair `pair`.
    Internal { pair: usize },
    Root,
}

#[derive(Clone, Debug)]
pub struct TreeNode {
    pub kind: TreeNodeKind,
    pub parent: Option<usize>,
    pub weight: f64,
}

/// Tree over `X ∪ Y` whose LCA weights equal the element kernel.
///
/// Layout: leaves `0..p` for `X`, `p..p+q` for `Y`, then one internal node
/// per matched pair, then the root (weight 0). Matched leaves hang below
/// their pair's internal node; everything else hangs below the root.
#[derive(Clone, Debug)]
pub struct HierarchicalTree {
    pub nodes: Vec<TreeNode>,
    pub p: usize,
    pub q: usize,
}

impl HierarchicalTree {
    pub fn build(self_x: &[f64], self_y: &[f64], matching: &Matching) -> Result<Self> {
        let (p, q) = (self_x.len(), self_y.len());
        matching.validate(p, q)?;
        let leaves = p + q;
        let root = leaves + matching.len();
        let mut nodes: Vec<TreeNode> = self_x
            .iter()
            .enumerate()
            .map(|(i, &w)| TreeNode {
                kind: TreeNodeKind::Leaf { from_x: true, index: i },
                parent: Some(root),
                weight: w,
            })
            .chain(self_y.iter().enumerate().map(|(i, &w)| TreeNode {
                kind: TreeNodeKind::Leaf { from_x: false, index: i },
                parent: Some(root),
                weight: w,
            }))
            .collect();
        for (k, (&(x, y), &s)) in matching.pairs.iter().zip(&matching.pair_similarities).enumerate() {
            let internal = leaves + k;
            nodes[x].parent = Some(internal);
            nodes[p + y].parent = Some(internal);
            nodes.push(TreeNode {
                kind: TreeNodeKind::Internal { pair: k },
                parent: Some(root),
                weight: s,
            });
        }
        nodes.push(TreeNode {
            kind: TreeNodeKind::Root,
            parent: None,
            weight: 0.0,
        });
        let tree = Self { nodes, p, q };
        tree.check_weight_order()?;
        Ok(tree)
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Every node must weigh at least as much as its parent.
    pub fn check_weight_order(&self) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(parent) = node.parent {
                if node.weight < self.nodes[parent].weight {
                    return Err(Error::invariant(format!(
                        "tree node {i} weighs {} below its parent's {}",
                        node.weight, self.nodes[parent].weight
                    )));
                }
            }
        }
        Ok(())
    }

    fn path_to_root(&self, mut v: usize) -> Vec<usize> {
        let mut path = vec![v];
        while let Some(parent) = self.nodes[v].parent {
            path.push(parent);
            v = parent;
        }
        path
    }

    pub fn lca(&self, a: usize, b: usize) -> usize {
        let pa = self.path_to_root(a);
        let pb = self.path_to_root(b);
        *pa.iter()
            .find(|v| pb.contains(v))
            .expect("all paths end at the root")
    }

    /// `k_e(a, b) = ω(LCA(a, b))` for element (leaf) indices `a`, `b`.
    pub fn kernel(&self, a: usize, b: usize) -> f64 {
        self.nodes[self.lca(a, b)].weight
    }

    pub fn internal_weight_sum(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, TreeNodeKind::Internal { .. }))
            .map(|n| n.weight)
            .sum()
    }
}

/// Explicit feature map of the element kernel and the induced set
/// embeddings, with the three equivalent expressions of the set kernel.
#[derive(Clone, Debug)]
pub struct FeatureMapVectors {
    /// One vector per element (X first), one coordinate per non-root tree node.
    pub psi: Vec<Vec<f64>>,
    pub delta_x: Vec<f64>,
    pub delta_y: Vec<f64>,
    /// `Σ_i min(Δx_i², Δy_i²)`.
    pub histogram_intersection: f64,
    pub internal_weight_sum: f64,
    pub matched_similarity_sum: f64,
    pub tree: HierarchicalTree,
}

impl FeatureMapVectors {
    pub fn from_tree(tree: HierarchicalTree, matched_similarity_sum: f64) -> Self {
        let root = tree.root();
        let elements = tree.p + tree.q;
        let psi: Vec<Vec<f64>> = (0..elements)
            .map(|e| {
                let mut v = vec![0.0; root];
                let mut node = e;
                while let Some(parent) = tree.nodes[node].parent {
                    v[node] = (tree.nodes[node].weight - tree.nodes[parent].weight).sqrt();
                    node = parent;
                }
                v
            })
            .collect();
        let sum = |range: std::ops::Range<usize>| {
            let mut acc = vec![0.0; root];
            for e in range {
                for (a, b) in acc.iter_mut().zip(&psi[e]) {
                    *a += b;
                }
            }
            acc
        };
        let delta_x = sum(0..tree.p);
        let delta_y = sum(tree.p..elements);
        let histogram_intersection = delta_x
            .iter()
            .zip(&delta_y)
            .map(|(a, b)| (a * a).min(b * b))
            .sum();
        Self {
            internal_weight_sum: tree.internal_weight_sum(),
            psi,
            delta_x,
            delta_y,
            histogram_intersection,
            matched_similarity_sum,
            tree,
        }
    }

    pub fn inner(&self, a: usize, b: usize) -> f64 {
        self.psi[a].iter().zip(&self.psi[b]).map(|(u, v)| u * v).sum()
    }

    /// Largest pairwise disagreement among the three set-kernel expressions.
    pub fn identity_gap(&self) -> f64 {
        let a = self.histogram_intersection;
        let b = self.internal_weight_sum;
        let c = self.matched_similarity_sum;
        (a - b).abs().max((b - c).abs()).max((a - c).abs())
    }
}

/// Builds the hierarchical tree and explicit feature map for `x`, `y` under
/// `matching`.
pub fn feature_map_oracle(x: &SubgraphEmbedding, y: &SubgraphEmbedding, matching: &Matching, tau: f64) -> Result<FeatureMapVectors> {
    let matching = recompute_pair_similarities(x, y, matching, tau)?;
    let tree = HierarchicalTree::build(&self_similarities(x), &self_similarities(y), &matching)?;
    Ok(FeatureMapVectors::from_tree(tree, matching.total()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matching(pairs: Vec<(usize, usize)>, sims: Vec<f64>) -> Matching {
        Matching {
            pairs,
            pair_similarities: sims,
        }
    }

    #[test]
    fn empty_matching_gives_diagonal_gram() {
        let g = ElementGram::build(&[2.0, 2.0], &[2.0], &matching(vec![], vec![])).unwrap();
        assert_eq!(g.matrix, DMatrix::from_diagonal_element(3, 3, 2.0));
    }

    #[test]
    fn two_leaf_tree_closed_form() {
        let t = 2.0;
        let tree = HierarchicalTree::build(&[t + 1.0], &[t + 1.0], &matching(vec![(0, 0)], vec![0.5])).unwrap();
        let fm = FeatureMapVectors::from_tree(tree, 0.5);
        assert_eq!(fm.psi[0].len(), 3);
        assert!((fm.psi[0][0] - (t + 1.0 - 0.5f64).sqrt()).abs() < 1e-15);
        assert!((fm.psi[0][2] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(fm.psi[0][1], 0.0);
        assert!((fm.inner(0, 1) - 0.5).abs() < 1e-15);
        assert!((fm.inner(0, 0) - (t + 1.0)).abs() < 1e-12);
        assert!(fm.identity_gap() < 1e-12);
    }

    #[test]
    fn lca_weights_match_gram() {
        let m = matching(vec![(0, 1), (1, 0)], vec![0.7, 0.2]);
        let tree = HierarchicalTree::build(&[1.0, 1.0], &[1.0, 1.0, 1.0], &m).unwrap();
        let gram = ElementGram::build(&[1.0, 1.0], &[1.0, 1.0, 1.0], &m).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                assert_eq!(tree.kernel(a, b), gram.matrix[(a, b)], "({a}, {b})");
            }
        }
    }

    #[test]
    fn weight_order_violation_is_reported() {
        let m = matching(vec![(0, 0)], vec![3.0]);
        assert!(matches!(
            HierarchicalTree::build(&[1.0], &[1.0], &m),
            Err(Error::Invariant(_))
        ));
    }
}
