//! Analytic reverse-mode gradients of the kernel with the matching held
//! fixed.
//!
//! For a fixed matching, `κ = Σ_(x,y) Σ_i exp(-‖a_x^i - b_y^i‖² / (d τ))` is
//! smooth in the filter's level embeddings `b^i = (B^i G)`, so the chain rule
//! runs backwards through the power chain `b^i = B b^(i-1)`: the upstream
//! gradient of level `i` contributes `U_i (b^(i-1))ᵀ` to `∂B` and `Bᵀ U_i` to
//! the level below.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::omk::{check_tau, Matching};
use crate::train::mlp::MlpGradient;
use crate::tse::{encode_parts, level_matrices, SubgraphEmbedding};

/// Gradient with respect to one filter's parameters.
///
/// `d_adjacency[(u, v)]` is the derivative with respect to the shared
/// undirected weight `a_uv = a_vu`, so the matrix is symmetric with a zero
/// diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterGradient {
    pub d_adjacency: DMatrix<f64>,
    pub d_features: DMatrix<f64>,
}

impl FilterGradient {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            d_adjacency: DMatrix::zeros(n, n),
            d_features: DMatrix::zeros(n, d),
        }
    }

    pub fn add_scaled(&mut self, other: &FilterGradient, w: f64) {
        self.d_adjacency += &other.d_adjacency * w;
        self.d_features += &other.d_features * w;
    }

    pub fn scale(&mut self, w: f64) {
        self.d_adjacency *= w;
        self.d_features *= w;
    }

    pub fn max_abs(&self) -> f64 {
        self.d_adjacency
            .iter()
            .chain(self.d_features.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.d_adjacency.iter().chain(self.d_features.iter()).all(|v| v.is_finite())
    }

    /// Keeps the leading `n` nodes (drops gradient on constant padding).
    pub fn truncated(&self, n: usize) -> FilterGradient {
        FilterGradient {
            d_adjacency: self.d_adjacency.view((0, 0), (n, n)).into_owned(),
            d_features: self.d_features.view((0, 0), (n, self.d_features.ncols())).into_owned(),
        }
    }
}

/// Accumulated gradients of a scalar loss with respect to every trainable
/// part of a model.
#[derive(Clone, Debug, Default)]
pub struct GradientTape {
    /// One entry per filter, indexed `[layer][filter]`.
    pub filters: Vec<Vec<FilterGradient>>,
    pub front: Option<MlpGradient>,
    pub classifier: Option<MlpGradient>,
    /// Number of samples the tape was averaged over.
    pub scale: f64,
}

impl GradientTape {
    pub fn is_finite(&self) -> bool {
        self.filters.iter().flatten().all(FilterGradient::is_finite)
            && self.front.as_ref().is_none_or(MlpGradient::is_finite)
            && self.classifier.as_ref().is_none_or(MlpGradient::is_finite)
    }
}

/// Per-level upstream gradients, one `n × d` matrix per level.
pub(crate) type LevelGrads = Vec<DMatrix<f64>>;

pub(crate) fn zero_level_grads(n: usize, d: usize, t: usize) -> LevelGrads {
    vec![DMatrix::zeros(n, d); t + 1]
}

/// Adds `weight · ∂κ/∂(levels)` for one matched pair set into the upstream
/// buffers of the filter side (`y`) and optionally the subgraph side (`x`).
pub(crate) fn accumulate_pair_upstream(
    x: &SubgraphEmbedding,
    y: &SubgraphEmbedding,
    matching: &Matching,
    tau: f64,
    weight: f64,
    upstream_y: Option<&mut LevelGrads>,
    upstream_x: Option<&mut LevelGrads>,
) {
    let d = x.dim();
    let scale = 1.0 / (d as f64 * tau);
    let coef = 2.0 * scale * weight;
    let mut uy = upstream_y;
    let mut ux = upstream_x;
    for &(a, b) in &matching.pairs {
        let xa = x.node(a);
        let yb = y.node(b);
        for i in 0..=x.t() {
            let (la, lb) = (xa.level(i), yb.level(i));
            let sq: f64 = la.iter().zip(lb).map(|(p, q)| (p - q) * (p - q)).sum();
            let s = (-sq * scale).exp();
            if s == 0.0 {
                continue;
            }
            if let Some(uy) = uy.as_deref_mut() {
                for k in 0..d {
                    uy[i][(b, k)] += coef * s * (la[k] - lb[k]);
                }
            }
            if let Some(ux) = ux.as_deref_mut() {
                for k in 0..d {
                    ux[i][(a, k)] -= coef * s * (la[k] - lb[k]);
                }
            }
        }
    }
}

/// Backward pass through `levels[i] = A levels[i-1]`. Returns the gradient
/// with respect to the full (unsymmetrized) adjacency when requested, and
/// with respect to the features.
pub(crate) fn backprop_levels(
    adjacency: &DMatrix<f64>,
    levels: &[DMatrix<f64>],
    upstream: &[DMatrix<f64>],
    want_adjacency: bool,
) -> (Option<DMatrix<f64>>, DMatrix<f64>) {
    let t = upstream.len() - 1;
    let n = adjacency.nrows();
    let mut d_adj = want_adjacency.then(|| DMatrix::zeros(n, n));
    let mut carry = upstream[t].clone();
    for i in (1..=t).rev() {
        if let Some(d_adj) = d_adj.as_mut() {
            d_adj.gemm(1.0, &carry, &levels[i - 1].transpose(), 1.0);
        }
        let mut below = upstream[i - 1].clone();
        below.gemm_tr(1.0, adjacency, &carry, 1.0);
        carry = below;
    }
    (d_adj, carry)
}

/// Folds a full-matrix adjacency gradient onto the shared undirected
/// weights: `g_uv = ∂_uv + ∂_vu`, zero diagonal.
pub(crate) fn symmetrize(d_adj: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d_adj.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { d_adj[(i, j)] + d_adj[(j, i)] })
}

/// Runs the backward pass for one filter given summed upstream gradients.
pub(crate) fn filter_gradient_from_upstream(filter: &Graph, levels: &[DMatrix<f64>], upstream: &[DMatrix<f64>]) -> FilterGradient {
    let (d_adj, d_feat) = backprop_levels(filter.adjacency(), levels, upstream, true);
    FilterGradient {
        d_adjacency: symmetrize(&d_adj.expect("requested")),
        d_features: d_feat,
    }
}

/// `∂κ/∂filter` for a subgraph embedding and filter under a fixed matching
/// (subgraph elements first in each pair).
pub fn grad_kappa(sub: &SubgraphEmbedding, filter: &Graph, t: usize, tau: f64, matching: &Matching) -> Result<FilterGradient> {
    check_tau(tau)?;
    if sub.t() != t || sub.dim() != filter.dim() {
        return Err(Error::shape(format!(
            "subgraph embedding (t={}, d={}) does not fit filter (t={t}, d={})",
            sub.t(),
            sub.dim(),
            filter.dim()
        )));
    }
    if sub.len() != filter.n() {
        return Err(Error::shape(format!(
            "stale matching: subgraph has {} nodes, filter {}",
            sub.len(),
            filter.n()
        )));
    }
    matching.validate(sub.len(), filter.n())?;
    let levels = level_matrices(filter.adjacency(), filter.features(), t);
    let filter_emb = SubgraphEmbedding::from_levels(&levels)?;
    let mut upstream = zero_level_grads(filter.n(), filter.dim(), t);
    accumulate_pair_upstream(sub, &filter_emb, matching, tau, 1.0, Some(&mut upstream), None);
    Ok(filter_gradient_from_upstream(filter, &levels, &upstream))
}

/// `∂κ/∂F_sub` for the subgraph's own features (topology held constant),
/// used when the features come out of a trainable transform.
pub fn grad_kappa_subgraph_features(sub: &Graph, filter: &Graph, t: usize, tau: f64, matching: &Matching) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    if sub.n() != filter.n() || sub.dim() != filter.dim() {
        return Err(Error::shape("subgraph and filter shapes differ"));
    }
    matching.validate(sub.n(), filter.n())?;
    let levels = level_matrices(sub.adjacency(), sub.features(), t);
    let sub_emb = SubgraphEmbedding::from_levels(&levels)?;
    let filter_emb = encode_parts(filter.adjacency(), filter.features(), t);
    let mut upstream = zero_level_grads(sub.n(), sub.dim(), t);
    accumulate_pair_upstream(&sub_emb, &filter_emb, matching, tau, 1.0, None, Some(&mut upstream));
    Ok(backprop_levels(sub.adjacency(), &levels, &upstream, false).1)
}

/// Result of comparing an analytic gradient with central differences.
#[derive(Clone, Debug)]
pub struct FdReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub numeric: Vec<f64>,
}

/// Denominator floor for relative errors, so components that are zero in
/// both gradients compare by absolute difference against this scale.
pub const FD_RELATIVE_FLOOR: f64 = 1e-4;

/// Central differences `(L(θ + h e_i) - L(θ - h e_i)) / 2h` for every scalar
/// parameter, compared with `analytic`. The relative error per component is
/// `|a - n| / max(|a|, |n|, FD_RELATIVE_FLOOR)`.
pub fn finite_difference_check<F>(mut loss_fn: F, params: &[f64], analytic: &[f64], h: f64) -> Result<FdReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::shape(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut worst = (0.0f64, 0usize);
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = loss_fn(&probe);
        probe[i] = params[i] - h;
        let down = loss_fn(&probe);
        probe[i] = params[i];
        let num = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - num).abs() / a.abs().max(num.abs()).max(FD_RELATIVE_FLOOR);
        if i == 0 || rel > worst.0 {
            worst = (rel, i);
        }
        numeric.push(num);
    }
    Ok(FdReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::omk::{greedy_match, Matcher};
    use crate::tse::encode;

    #[test]
    fn quadratic_fd_is_exact() {
        let params = [0.3, -1.2, 2.0];
        let analytic: Vec<f64> = params.iter().enumerate().map(|(i, p)| 2.0 * (i as f64 + 1.0) * p).collect();
        let report = finite_difference_check(
            |x| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum(),
            &params,
            &analytic,
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-8, "{report:?}");
    }

    #[test]
    fn zero_levels_ignore_adjacency() {
        let sub = Graph::from_edges(3, &[(0, 1)], DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.9, 0.3, 0.5, 0.5])).unwrap();
        let filter = Graph::from_edges(3, &[(1, 2)], DMatrix::from_row_slice(3, 2, &[0.4, 0.2, 0.1, 0.8, 0.6, 0.0])).unwrap();
        let se = encode(&sub, 0);
        let m = greedy_match(&se, &encode(&filter, 0), 1.0).unwrap();
        let g = grad_kappa(&se, &filter, 0, 1.0, &m).unwrap();
        assert!(g.d_adjacency.iter().all(|&v| v == 0.0));
        assert!(g.d_features.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn self_match_is_stationary() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], DMatrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin().abs())).unwrap();
        let e = encode(&g, 3);
        let k = crate::omk::kernel_from_embeddings(&e, &e, 1.0, Matcher::Greedy).unwrap();
        let grad = grad_kappa(&e, &g, 3, 1.0, &k.matching).unwrap();
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn stale_matching_is_a_shape_error() {
        let sub = Graph::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let filter = Graph::new(DMatrix::zeros(3, 3), DMatrix::zeros(3, 1)).unwrap();
        let m = Matching {
            pairs: vec![(0, 0)],
            pair_similarities: vec![1.0],
        };
        assert!(matches!(grad_kappa(&encode(&sub, 1), &filter, 1, 1.0, &m), Err(Error::Shape(_))));
    }
}
