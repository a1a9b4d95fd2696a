//! Unsupervised filter objectives: matching one target graph, and covering
//! a collection of subgraphs with the best-responding filter each.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grad::{accumulate_pair_upstream, filter_gradient_from_upstream, zero_level_grads, FilterGradient, LevelGrads};
use crate::graph::Graph;
use crate::omk::{check_tau, greedy_from_matrix, similarity_matrix, Matching};
use crate::train::filter::GraphFilter;
use crate::train::layer::PreparedFilter;
use crate::tse::{encode, SubgraphEmbedding};

/// Items per work unit in parallel reductions. Fixed so that the summation
/// order, and hence the result, does not depend on the thread count.
pub(crate) const REDUCTION_CHUNK: usize = 32;

#[derive(Clone, Debug)]
pub struct IsoOutput {
    /// `-κ(target, filter)`.
    pub loss: f64,
    pub kappa: f64,
    pub matching: Matching,
    /// Gradient of `loss` (not of κ) with respect to the filter.
    pub gradient: FilterGradient,
}

/// `L = -κ(G, H)` for a target graph and a filter of the same size.
pub fn loss_iso(target: &Graph, filter: &GraphFilter, t: usize, tau: f64) -> Result<IsoOutput> {
    let emb = encode(target, t);
    loss_iso_encoded(&emb, filter, t, tau)
}

/// [`loss_iso`] with the target already encoded.
pub fn loss_iso_encoded(target: &SubgraphEmbedding, filter: &GraphFilter, t: usize, tau: f64) -> Result<IsoOutput> {
    check_tau(tau)?;
    if target.len() != filter.nodes() {
        return Err(Error::shape(format!(
            "target has {} nodes, filter {}",
            target.len(),
            filter.nodes()
        )));
    }
    let prepared = PreparedFilter::new(filter, filter.nodes(), t)?;
    let matching = greedy_from_matrix(&similarity_matrix(target, &prepared.embedding, tau)?);
    let mut upstream = zero_level_grads(filter.nodes(), filter.dim(), t);
    accumulate_pair_upstream(target, &prepared.embedding, &matching, tau, -1.0, Some(&mut upstream), None);
    let gradient = filter_gradient_from_upstream(&prepared.graph, &prepared.levels, &upstream);
    let kappa = matching.total();
    Ok(IsoOutput {
        loss: -kappa,
        kappa,
        matching,
        gradient,
    })
}

#[derive(Clone, Debug)]
pub struct FrqOutput {
    /// `-Σ_i max_j κ(G_i, γ_j)`.
    pub loss: f64,
    /// Winning filter per subgraph (lowest index on ties).
    pub assignments: Vec<usize>,
    /// Winning kernel value per subgraph.
    pub best_kappa: Vec<f64>,
    /// Matching against the winning filter per subgraph.
    pub matchings: Vec<Matching>,
    /// Gradient of `loss` per filter (unpadded shape).
    pub gradients: Vec<FilterGradient>,
}

impl FrqOutput {
    /// Number of subgraphs won by each filter.
    pub fn counts(&self, filters: usize) -> Vec<usize> {
        let mut counts = vec![0; filters];
        for &a in &self.assignments {
            counts[a] += 1;
        }
        counts
    }
}

/// `L = -Σ_i max_j κ(G_i, γ_j)`; only each subgraph's winning filter gets
/// gradient. Filters smaller than the subgraphs are padded with isolated
/// zero nodes.
pub fn loss_frq(subgraphs: &[SubgraphEmbedding], filters: &[GraphFilter], t: usize, tau: f64) -> Result<FrqOutput> {
    check_tau(tau)?;
    let first = filters.first().ok_or_else(|| Error::config("frequency loss needs at least one filter"))?;
    let m = subgraphs.first().map_or(first.nodes(), SubgraphEmbedding::len);
    if let Some(bad) = subgraphs.iter().find(|s| s.len() != m || s.t() != t) {
        return Err(Error::shape(format!(
            "subgraphs must share size {m} and t={t}; found size {} with t={}",
            bad.len(),
            bad.t()
        )));
    }
    let prepared = filters
        .iter()
        .map(|f| PreparedFilter::new(f, m, t))
        .collect::<Result<Vec<_>>>()?;
    let dim = first.dim();

    struct Partial {
        winners: Vec<(usize, Matching)>,
        upstream: Vec<Option<LevelGrads>>,
    }
    let partials = subgraphs
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| -> Result<Partial> {
            let mut part = Partial {
                winners: Vec::with_capacity(chunk.len()),
                upstream: vec![None; prepared.len()],
            };
            for sub in chunk {
                let mut best: Option<(usize, Matching)> = None;
                for (j, p) in prepared.iter().enumerate() {
                    let matching = greedy_from_matrix(&similarity_matrix(sub, &p.embedding, tau)?);
                    if best.as_ref().is_none_or(|(_, b)| matching.total() > b.total()) {
                        best = Some((j, matching));
                    }
                }
                let (j, matching) = best.expect("at least one filter");
                let up = part.upstream[j].get_or_insert_with(|| zero_level_grads(m, dim, t));
                accumulate_pair_upstream(sub, &prepared[j].embedding, &matching, tau, -1.0, Some(up), None);
                part.winners.push((j, matching));
            }
            Ok(part)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut upstream: Vec<Option<LevelGrads>> = vec![None; prepared.len()];
    let mut assignments = Vec::with_capacity(subgraphs.len());
    let mut best_kappa = Vec::with_capacity(subgraphs.len());
    let mut matchings = Vec::with_capacity(subgraphs.len());
    for part in partials {
        for (j, matching) in part.winners {
            assignments.push(j);
            best_kappa.push(matching.total());
            matchings.push(matching);
        }
        for (acc, add) in upstream.iter_mut().zip(part.upstream) {
            if let Some(add) = add {
                match acc {
                    Some(acc) => acc.iter_mut().zip(&add).for_each(|(a, b)| *a += b),
                    None => *acc = Some(add),
                }
            }
        }
    }
    let gradients = prepared
        .iter()
        .zip(&upstream)
        .map(|(p, up)| match up {
            Some(up) => filter_gradient_from_upstream(&p.graph, &p.levels, up).truncated(p.nodes),
            None => FilterGradient::zeros(p.nodes, dim),
        })
        .collect();
    Ok(FrqOutput {
        loss: -best_kappa.iter().sum::<f64>(),
        assignments,
        best_kappa,
        matchings,
        gradients,
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Graph {
        use rand::Rng;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(0.5) {
                    edges.push((i, j));
                }
            }
        }
        let f = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
        Graph::from_edges(n, &edges, f).unwrap()
    }

    #[test]
    fn iso_at_target_is_the_global_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = random_graph(&mut rng, 6, 3);
        let out = loss_iso(&g, &GraphFilter::from_graph(&g, true), 3, 1.0).unwrap();
        assert_eq!(out.loss, -24.0);
        assert_eq!(out.gradient.max_abs(), 0.0);
    }

    #[test]
    fn one_subgraph_one_filter_is_iso() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let g = random_graph(&mut rng, 5, 2);
        let filter = GraphFilter::random(5, 2, true, &mut rng);
        let iso = loss_iso(&g, &filter, 2, 0.8).unwrap();
        let frq = loss_frq(&[encode(&g, 2)], std::slice::from_ref(&filter), 2, 0.8).unwrap();
        assert_eq!(iso.loss, frq.loss);
        assert_eq!(iso.gradient, frq.gradients[0]);
    }

    #[test]
    fn empty_filter_list_is_a_config_error() {
        assert!(matches!(loss_frq(&[], &[], 1, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn losing_filters_get_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = random_graph(&mut rng, 4, 2);
        let winner = GraphFilter::from_graph(&g, true);
        let mut loser = GraphFilter::random(4, 2, true, &mut rng);
        loser.set_params(&vec![0.0; loser.param_count()]).unwrap();
        let out = loss_frq(&[encode(&g, 1)], &[loser, winner], 1, 1.0).unwrap();
        assert_eq!(out.assignments, vec![1]);
        assert_eq!(out.gradients[0].max_abs(), 0.0);
        assert_eq!(out.counts(2), vec![0, 1]);
    }
}
