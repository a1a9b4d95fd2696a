//! Library results checked against independent, deliberately naive
//! implementations.

use nalgebra::DMatrix;
use gomk::omk::{greedy_from_matrix, optimal_from_matrix, similarity_matrix};
use gomk::{
    encode, gomk, grad_kappa, kappa_under_matching, optimal_match, self_kernel, solid_similarity, Graph, Matcher,
};
use proptest::prelude::*;

fn graph_strategy(max_n: usize, d: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(move |n| {
        (
            proptest::collection::vec(prop_oneof![Just(0.0), 0.05f64..=1.0], n * (n - 1) / 2),
            proptest::collection::vec(0.0f64..1.0, n * d),
        )
            .prop_map(move |(w, f)| {
                let mut a = DMatrix::zeros(n, n);
                let mut k = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        a[(i, j)] = w[k];
                        a[(j, i)] = w[k];
                        k += 1;
                    }
                }
                Graph::new(a, DMatrix::from_row_slice(n, d, &f)).unwrap()
            })
    })
}

/// Level i of node v: sum over neighbors u of a_vu times level i-1 of u.
fn naive_levels(g: &Graph, t: usize) -> Vec<Vec<Vec<f64>>> {
    let (n, d) = (g.n(), g.dim());
    let mut levels = vec![(0..n).map(|v| (0..d).map(|k| g.features()[(v, k)]).collect::<Vec<_>>()).collect::<Vec<_>>()];
    for i in 1..=t {
        let prev = &levels[i - 1];
        let mut next = vec![vec![0.0; d]; n];
        for (v, row) in next.iter_mut().enumerate() {
            for u in 0..n {
                let w = g.adjacency()[(v, u)];
                for k in 0..d {
                    row[k] += w * prev[u][k];
                }
            }
        }
        levels.push(next);
    }
    levels
}

fn naive_similarity(a: &[Vec<f64>], b: &[Vec<f64>], tau: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            (-sq / (x.len() as f64 * tau)).exp()
        })
        .sum()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force_best(sim: &DMatrix<f64>) -> f64 {
    let n = sim.nrows();
    permutations(n)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| sim[(i, j)]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn permuted(g: &Graph, perm: &[usize]) -> Graph {
    let n = g.n();
    let a = DMatrix::from_fn(n, n, |i, j| g.adjacency()[(perm[i], perm[j])]);
    let f = DMatrix::from_fn(n, g.dim(), |i, k| g.features()[(perm[i], k)]);
    Graph::new(a, f).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_matches_neighbor_recursion(g in graph_strategy(7, 3), t in 0usize..4) {
        let emb = encode(&g, t);
        let naive = naive_levels(&g, t);
        for v in 0..g.n() {
            let node = emb.node(v);
            for (i, level) in naive.iter().enumerate() {
                for (a, b) in node.level(i).iter().zip(&level[v]) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn similarity_matches_closed_form(g in graph_strategy(5, 2), h in graph_strategy(5, 2), t in 0usize..3, tau in 0.1f64..4.0) {
        let (ex, ey) = (encode(&g, t), encode(&h, t));
        let (nx, ny) = (naive_levels(&g, t), naive_levels(&h, t));
        for u in 0..g.n() {
            for v in 0..h.n() {
                let a: Vec<_> = nx.iter().map(|l| l[u].clone()).collect();
                let b: Vec<_> = ny.iter().map(|l| l[v].clone()).collect();
                let want = naive_similarity(&a, &b, tau);
                let got = solid_similarity(ex.node(u), ey.node(v), tau).unwrap();
                prop_assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn self_kernel_is_constant(g in graph_strategy(9, 3), t in 0usize..5) {
        for matcher in [Matcher::Greedy, Matcher::Exact] {
            let k = gomk(&g, &g, t, 1.0, matcher).unwrap();
            prop_assert!((k.kappa - self_kernel(g.n(), t)).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_is_bounded(g in graph_strategy(6, 2), h in graph_strategy(6, 2), t in 0usize..3) {
        let m = g.n().max(h.n());
        let (g, h) = (g.padded(m).unwrap(), h.padded(m).unwrap());
        let k = gomk(&g, &h, t, 0.7, Matcher::Greedy).unwrap();
        prop_assert!(k.kappa >= 0.0 && k.kappa <= self_kernel(m, t) + 1e-12);
        prop_assert!(k.matching.is_complete(m, m));
    }

    #[test]
    fn exact_kernel_is_symmetric_and_permutation_invariant(
        g in graph_strategy(6, 2),
        h in graph_strategy(6, 2),
        seed in any::<u64>(),
    ) {
        let m = g.n().max(h.n());
        let (g, h) = (g.padded(m).unwrap(), h.padded(m).unwrap());
        let ab = gomk(&g, &h, 2, 1.0, Matcher::Exact).unwrap().kappa;
        let ba = gomk(&h, &g, 2, 1.0, Matcher::Exact).unwrap().kappa;
        prop_assert!((ab - ba).abs() < 1e-9);
        let perms = permutations(m);
        let perm = &perms[(seed % perms.len() as u64) as usize];
        let gp = permuted(&g, perm);
        let k = gomk(&gp, &h, 2, 1.0, Matcher::Exact).unwrap().kappa;
        prop_assert!((k - ab).abs() < 1e-9);
        prop_assert!((gomk(&g, &gp, 2, 1.0, Matcher::Exact).unwrap().kappa - self_kernel(m, 2)).abs() < 1e-9);
    }

    #[test]
    fn matchers_against_brute_force(entries in proptest::collection::vec(0.0f64..1.0, 1..=36)) {
        let n = (entries.len() as f64).sqrt().floor() as usize;
        let sim = DMatrix::from_row_slice(n, n, &entries[..n * n]);
        let best = brute_force_best(&sim);
        let exact = optimal_from_matrix(&sim);
        let greedy = greedy_from_matrix(&sim);
        prop_assert!(exact.is_complete(n, n) && greedy.is_complete(n, n));
        prop_assert!((exact.total() - best).abs() < 1e-9);
        prop_assert!(greedy.total() <= best + 1e-12);
    }

    #[test]
    fn kernel_gradient_matches_central_differences(g in graph_strategy(5, 2), h in graph_strategy(5, 2)) {
        let m = g.n().max(h.n());
        let (sub, filter) = (g.padded(m).unwrap(), h.padded(m).unwrap());
        let (t, tau, step) = (2, 1.0, 1e-6);
        let sub_emb = encode(&sub, t);
        let matching = optimal_match(&sub_emb, &encode(&filter, t), tau).unwrap();
        let grad = grad_kappa(&sub_emb, &filter, t, tau, &matching).unwrap();
        let kappa = |f: &Graph| kappa_under_matching(&sub_emb, &encode(f, t), &matching, tau).unwrap();
        for i in 0..m {
            for j in (i + 1)..m {
                let mut a = filter.adjacency().clone();
                let w = a[(i, j)];
                let (hi, lo) = ((w + step).min(1.0), (w - step).max(0.0));
                a[(i, j)] = hi;
                a[(j, i)] = hi;
                let up = kappa(&Graph::new(a.clone(), filter.features().clone()).unwrap());
                a[(i, j)] = lo;
                a[(j, i)] = lo;
                let down = kappa(&Graph::new(a, filter.features().clone()).unwrap());
                let numeric = (up - down) / (hi - lo);
                let analytic = grad.d_adjacency[(i, j)];
                prop_assert!((analytic - numeric).abs() <= 1e-5 * analytic.abs().max(1.0), "a[{i},{j}]: {analytic} vs {numeric}");
            }
            for k in 0..filter.dim() {
                let mut f = filter.features().clone();
                f[(i, k)] += step;
                let up = kappa(&Graph::new(filter.adjacency().clone(), f.clone()).unwrap());
                f[(i, k)] -= 2.0 * step;
                let down = kappa(&Graph::new(filter.adjacency().clone(), f).unwrap());
                let numeric = (up - down) / (2.0 * step);
                let analytic = grad.d_features[(i, k)];
                prop_assert!((analytic - numeric).abs() <= 1e-5 * analytic.abs().max(1.0), "f[{i},{k}]: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn bfs_ball_matches_shortest_paths(g in graph_strategy(9, 1), k in 1usize..4, center in 0usize..9) {
        let n = g.n();
        let center = center % n;
        // Floyd-Warshall on hop counts
        let inf = usize::MAX / 2;
        let mut dist = vec![vec![inf; n]; n];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = 0;
            for (j, cell) in row.iter_mut().enumerate() {
                if g.adjacency()[(i, j)] > 0.0 {
                    *cell = 1;
                }
            }
        }
        for via in 0..n {
            for i in 0..n {
                for j in 0..n {
                    dist[i][j] = dist[i][j].min(dist[i][via] + dist[via][j]);
                }
            }
        }
        let ball = g.bfs_ball(center, k).unwrap();
        let mut want: Vec<usize> = (0..n).filter(|&v| dist[center][v] <= k).collect();
        let mut got: Vec<usize> = ball.iter().map(|&(v, _)| v).collect();
        for &(v, hop) in &ball {
            prop_assert_eq!(hop, dist[center][v]);
        }
        prop_assert!(ball.windows(2).all(|w| w[0].1 <= w[1].1));
        got.sort_unstable();
        want.sort_unstable();
        prop_assert_eq!(got, want);
    }
}

#[test]
fn similarity_matrix_agrees_with_pairwise_calls() {
    let a = Graph::from_edges(3, &[(0, 1), (1, 2)], DMatrix::from_row_slice(3, 1, &[0.1, 0.5, 0.9])).unwrap();
    let b = Graph::from_edges(3, &[(0, 1), (0, 2)], DMatrix::from_row_slice(3, 1, &[0.3, 0.2, 0.7])).unwrap();
    let (ea, eb) = (encode(&a, 2), encode(&b, 2));
    let s = similarity_matrix(&ea, &eb, 0.5).unwrap();
    for u in 0..3 {
        for v in 0..3 {
            assert_eq!(s[(u, v)], solid_similarity(ea.node(u), eb.node(v), 0.5).unwrap());
        }
    }
}

#[test]
fn greedy_takes_rows_in_order_with_low_index_ties() {
    // Row 0 grabs column 1 (0.9) although the optimum gives it column 0.
    let sim = DMatrix::from_row_slice(2, 2, &[0.8, 0.9, 0.1, 0.85]);
    let g = greedy_from_matrix(&sim);
    assert_eq!(g.pairs, vec![(0, 1), (1, 0)]);
    assert!((optimal_from_matrix(&sim).total() - 1.65).abs() < 1e-12);
    let tie = DMatrix::from_element(3, 3, 0.5);
    assert_eq!(greedy_from_matrix(&tie).pairs, vec![(0, 0), (1, 1), (2, 2)]);
}
