//! Randomized invariant suite: the self-kernel constant, positive
//! semi-definiteness of the element kernel and its tree feature map, greedy
//! versus exact matching, analytic versus numeric gradients, and adjacency
//! reconstruction from level embeddings.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{sub_rng, Check};
use crate::grad::finite_difference_check;
use crate::graph::Graph;
use crate::omk::{
    element_gram, feature_map_oracle, gomk, greedy_from_matrix, greedy_match, kappa_under_matching, optimal_from_matrix, self_kernel,
    similarity_matrix, Matcher, Matching,
};
use crate::train::{loss_frq, loss_iso_encoded, GraphFilter, PreparedFilter};
use crate::tse::{encode, reconstruct_adjacency, Reconstruction, SubgraphEmbedding};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub seed: u64,
    pub self_kernel_graphs: usize,
    pub psd_instances: usize,
    pub matching_instances: usize,
    /// Largest set size for greedy-vs-exact instances.
    pub matching_max_size: usize,
    /// Largest size at which the exact matcher is compared with brute force.
    pub exhaustive_max_size: usize,
    pub gradient_instances: usize,
    pub fd_step: f64,
    pub fd_tolerance: f64,
    pub reconstruction_instances: usize,
    pub reconstruction_tolerance: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            self_kernel_graphs: 200,
            psd_instances: 500,
            matching_instances: 1000,
            matching_max_size: 8,
            exhaustive_max_size: 6,
            gradient_instances: 100,
            fd_step: 1e-5,
            fd_tolerance: 1e-4,
            reconstruction_instances: 100,
            reconstruction_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub checks: Vec<Check>,
}

/// Symmetric weights in `(0, 1]` on a random edge set, features `U(0, 1)`.
pub(crate) fn random_weighted_graph(rng: &mut ChaCha8Rng, n: usize, d: usize, density: f64) -> Graph {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(density) {
                let w = 1.0 - rng.random::<f64>();
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    let f = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
    Graph::new(a, f).expect("valid by construction")
}

fn self_kernel_check(cfg: &CheckConfig) -> Result<Check> {
    let mut rng = sub_rng(cfg.seed, 4);
    let mut worst = 0.0f64;
    for _ in 0..cfg.self_kernel_graphs {
        let m = rng.random_range(2..=12);
        let t = rng.random_range(0..=4);
        let d = rng.random_range(1..=4);
        let density = rng.random_range(0.1..0.9);
        let g = random_weighted_graph(&mut rng, m, d, density);
        let k = gomk(&g, &g, t, rng.random_range(0.25..4.0), Matcher::Greedy)?;
        worst = worst.max((k.kappa - self_kernel(m, t)).abs());
    }
    Ok(Check::new(
        "self_kernel_constant",
        worst <= 1e-9,
        format!("max |κ(g,g) - m(t+1)| = {worst:.3e} over {} graphs", cfg.self_kernel_graphs),
    ))
}

fn random_embedding(rng: &mut ChaCha8Rng, n: usize, d: usize, t: usize) -> SubgraphEmbedding {
    let g = random_weighted_graph(rng, n, d, 0.4);
    encode(&g, t)
}

fn psd_checks(cfg: &CheckConfig) -> Result<Vec<Check>> {
    let mut rng = sub_rng(cfg.seed, 5);
    let mut min_eig = f64::INFINITY;
    let mut worst_identity = 0.0f64;
    let mut worst_inner = 0.0f64;
    for _ in 0..cfg.psd_instances {
        let (p, q) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let d = rng.random_range(1..=3);
        let t = rng.random_range(0..=3);
        let tau = rng.random_range(0.25..4.0);
        let x = random_embedding(&mut rng, p, d, t);
        let y = random_embedding(&mut rng, q, d, t);
        let matching = greedy_match(&x, &y, tau)?;
        let gram = element_gram(&x, &y, &matching, tau)?;
        min_eig = min_eig.min(gram.min_eigenvalue());
        let map = feature_map_oracle(&x, &y, &matching, tau)?;
        worst_identity = worst_identity.max(map.identity_gap());
        for a in 0..p + q {
            for b in 0..p + q {
                worst_inner = worst_inner.max((map.inner(a, b) - gram.matrix[(a, b)]).abs());
            }
        }
    }
    Ok(vec![
        Check::new(
            "element_kernel_psd",
            min_eig >= -1e-8,
            format!("min Gram eigenvalue {min_eig:.3e} over {} instances", cfg.psd_instances),
        ),
        Check::new(
            "set_kernel_identity",
            worst_identity <= 1e-9,
            format!("max gap between histogram intersection, tree weights and matched sum {worst_identity:.3e}"),
        ),
        Check::new(
            "feature_map_inner_products",
            worst_inner <= 1e-9,
            format!("max |<ψ(i),ψ(j)> - k_e(i,j)| = {worst_inner:.3e}"),
        ),
    ])
}

/// Best total over every injection of the smaller side into the larger.
pub(crate) fn exhaustive_best(sim: &DMatrix<f64>) -> f64 {
    fn go(sim: &DMatrix<f64>, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == sim.nrows() {
            *best = best.max(acc);
            return;
        }
        for c in 0..sim.ncols() {
            if !used[c] {
                used[c] = true;
                go(sim, row + 1, used, acc + sim[(row, c)], best);
                used[c] = false;
            }
        }
    }
    let sim = if sim.nrows() > sim.ncols() { sim.transpose() } else { sim.clone() };
    let mut best = f64::NEG_INFINITY;
    go(&sim, 0, &mut vec![false; sim.ncols()], 0.0, &mut best);
    best
}

fn matching_checks(cfg: &CheckConfig) -> Result<Vec<Check>> {
    let mut rng = sub_rng(cfg.seed, 6);
    let (mut greedy_violations, mut exact_violations, mut compared) = (0, 0, 0);
    let mut smallest_gap = f64::INFINITY;
    for i in 0..cfg.matching_instances {
        let p = rng.random_range(1..=cfg.matching_max_size);
        let q = rng.random_range(1..=cfg.matching_max_size);
        // alternate raw random matrices with genuine embedding similarities
        let sim = if i % 2 == 0 {
            DMatrix::from_fn(p, q, |_, _| rng.random::<f64>())
        } else {
            let d = rng.random_range(1..=3);
            let t = rng.random_range(0..=2);
            let x = random_embedding(&mut rng, p, d, t);
            let y = random_embedding(&mut rng, q, d, t);
            similarity_matrix(&x, &y, rng.random_range(0.25..4.0))?
        };
        let greedy = greedy_from_matrix(&sim).total();
        let exact = optimal_from_matrix(&sim).total();
        smallest_gap = smallest_gap.min(exact - greedy);
        if greedy > exact + 1e-12 {
            greedy_violations += 1;
        }
        if p.max(q) <= cfg.exhaustive_max_size {
            compared += 1;
            if (exhaustive_best(&sim) - exact).abs() > 1e-9 {
                exact_violations += 1;
            }
        }
    }
    Ok(vec![
        Check::new(
            "greedy_le_exact",
            greedy_violations == 0,
            format!(
                "{greedy_violations} violations over {} instances (min exact - greedy {smallest_gap:.3e})",
                cfg.matching_instances
            ),
        ),
        Check::new(
            "exact_matches_exhaustive",
            exact_violations == 0 && compared > 0,
            format!("{exact_violations} disagreements over {compared} brute-forced instances"),
        ),
    ])
}

fn same_matching(a: &Matching, b: &Matching) -> bool {
    a.pairs == b.pairs
}

/// Numeric-vs-analytic gradient of the iso loss at points where every probe
/// leaves the greedy matching unchanged. Returns the worst relative error,
/// the number of drawn instances, and the worst line-search decrease.
fn iso_gradient_check(cfg: &CheckConfig, rng: &mut ChaCha8Rng) -> Result<(f64, usize, f64)> {
    let (mut accepted, mut drawn) = (0, 0);
    let mut worst = 0.0f64;
    let mut worst_drop = 0.0f64;
    while accepted < cfg.gradient_instances {
        drawn += 1;
        if drawn > cfg.gradient_instances * 50 {
            return Err(Error::invariant("could not find enough instances with a locally constant matching"));
        }
        let n = rng.random_range(3..=6);
        let (d, t) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let tau = rng.random_range(0.5..2.0);
        let target = encode(&random_weighted_graph(rng, n, d, 0.5), t);
        let mut filter = GraphFilter::random(n, d, true, rng);
        let out = loss_iso_encoded(&target, &filter, t, tau)?;
        let params = filter.to_params();
        let analytic = filter.gradient_to_params(&out.gradient);
        let mut stable = true;
        let mut probe = filter.clone();
        let report = finite_difference_check(
            |p| {
                probe.set_params(p).expect("same length");
                let o = loss_iso_encoded(&target, &probe, t, tau).expect("valid shapes");
                stable &= same_matching(&o.matching, &out.matching);
                o.loss
            },
            &params,
            &analytic,
            cfg.fd_step,
        )?;
        if !stable {
            continue;
        }
        accepted += 1;
        worst = worst.max(report.max_relative_error);

        // ascent on κ = descent on the loss, with the matching frozen
        let step = 1e-4;
        let moved: Vec<f64> = params.iter().zip(&analytic).map(|(p, g)| p - step * g).collect();
        filter.set_params(&moved)?;
        let emb = PreparedFilter::new(&filter, n, t)?.embedding;
        let after = kappa_under_matching(&target, &emb, &out.matching, tau)?;
        worst_drop = worst_drop.max(out.kappa - after);
    }
    Ok((worst, drawn, worst_drop))
}

fn frq_gradient_check(cfg: &CheckConfig, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let (mut accepted, mut drawn) = (0, 0);
    let mut worst = 0.0f64;
    while accepted < cfg.gradient_instances {
        drawn += 1;
        if drawn > cfg.gradient_instances * 50 {
            return Err(Error::invariant("could not find enough instances with locally constant assignments"));
        }
        let n = rng.random_range(3..=5);
        let (d, t) = (rng.random_range(1..=3), rng.random_range(1..=2));
        let tau = rng.random_range(0.5..2.0);
        let subs: Vec<SubgraphEmbedding> = (0..10).map(|_| encode(&random_weighted_graph(rng, n, d, 0.5), t)).collect();
        let filters: Vec<GraphFilter> = (0..2).map(|_| GraphFilter::random(n, d, true, rng)).collect();
        let out = loss_frq(&subs, &filters, t, tau)?;
        let params: Vec<f64> = filters.iter().flat_map(GraphFilter::to_params).collect();
        let analytic: Vec<f64> = filters
            .iter()
            .zip(&out.gradients)
            .flat_map(|(f, g)| f.gradient_to_params(g))
            .collect();
        let width = filters[0].param_count();
        let mut probe = filters.clone();
        let mut stable = true;
        let report = finite_difference_check(
            |p| {
                for (f, chunk) in probe.iter_mut().zip(p.chunks(width)) {
                    f.set_params(chunk).expect("same length");
                }
                let o = loss_frq(&subs, &probe, t, tau).expect("valid shapes");
                stable &= o.assignments == out.assignments
                    && o.matchings.iter().zip(&out.matchings).all(|(a, b)| same_matching(a, b));
                o.loss
            },
            &params,
            &analytic,
            cfg.fd_step,
        )?;
        if stable {
            accepted += 1;
            worst = worst.max(report.max_relative_error);
        }
    }
    Ok((worst, drawn))
}

fn gradient_checks(cfg: &CheckConfig) -> Result<Vec<Check>> {
    let mut rng = sub_rng(cfg.seed, 7);
    let (iso, iso_drawn, drop) = iso_gradient_check(cfg, &mut rng)?;
    let (frq, frq_drawn) = frq_gradient_check(cfg, &mut rng)?;
    Ok(vec![
        Check::new(
            "gradient_iso",
            iso < cfg.fd_tolerance,
            format!(
                "max relative error {iso:.3e} over {} instances ({iso_drawn} drawn, h={})",
                cfg.gradient_instances, cfg.fd_step
            ),
        ),
        Check::new(
            "gradient_frq",
            frq < cfg.fd_tolerance,
            format!(
                "max relative error {frq:.3e} over {} instances ({frq_drawn} drawn, h={})",
                cfg.gradient_instances, cfg.fd_step
            ),
        ),
        Check::new(
            "ascent_step_sign",
            drop <= 1e-12,
            format!("largest κ decrease after a 1e-4 ascent step under a frozen matching: {drop:.3e}"),
        ),
    ])
}

fn reconstruction_checks(cfg: &CheckConfig) -> Result<Vec<Check>> {
    let mut rng = sub_rng(cfg.seed, 8);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..cfg.reconstruction_instances {
        let g = random_weighted_graph(&mut rng, 6, 3, 0.5);
        match reconstruct_adjacency(&encode(&g, 3))? {
            Reconstruction::Recovered { adjacency, .. } => {
                worst = worst.max((adjacency - g.adjacency()).abs().max());
            }
            Reconstruction::NotFullRank { .. } => failures += 1,
        }
    }

    // rank-deficient constructions: too few columns, identical features on a
    // vertex-transitive graph, and an isolated zero-feature node
    let cycle: Vec<(usize, usize)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
    let mut isolated = random_weighted_graph(&mut rng, 6, 3, 0.8);
    let mut a = isolated.adjacency().clone();
    let mut f = isolated.features().clone();
    a.row_mut(5).fill(0.0);
    a.column_mut(5).fill(0.0);
    f.row_mut(5).fill(0.0);
    isolated = Graph::new(a, f)?;
    let deficient = [
        encode(&random_weighted_graph(&mut rng, 6, 1, 0.5), 3),
        encode(&Graph::from_edges(6, &cycle, DMatrix::from_element(6, 2, 1.0))?, 4),
        encode(&isolated, 3),
    ];
    let reported = deficient
        .iter()
        .map(reconstruct_adjacency)
        .collect::<Result<Vec<_>>>()?
        .iter()
        .filter(|r| matches!(r, Reconstruction::NotFullRank { .. }))
        .count();
    Ok(vec![
        Check::new(
            "reconstruction_full_rank",
            failures == 0 && worst < cfg.reconstruction_tolerance,
            format!(
                "max abs error {worst:.3e} over {} instances, {failures} reported rank-deficient",
                cfg.reconstruction_instances
            ),
        ),
        Check::new(
            "reconstruction_rank_deficient",
            reported == deficient.len(),
            format!("{reported}/{} deficient constructions reported", deficient.len()),
        ),
    ])
}

/// Runs every invariant family with the configured instance counts.
pub fn run_invariant_suite(cfg: &CheckConfig) -> Result<InvariantReport> {
    let mut checks = vec![self_kernel_check(cfg)?];
    checks.extend(psd_checks(cfg)?);
    checks.extend(matching_checks(cfg)?);
    checks.extend(gradient_checks(cfg)?);
    checks.extend(reconstruction_checks(cfg)?);
    Ok(InvariantReport { checks })
}
