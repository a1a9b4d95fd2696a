use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Injective pairing of elements of `X` (first index) with elements of `Y`
/// (second index), with the similarity of every pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub pair_similarities: Vec<f64>,
}

impl Matching {
    pub fn total(&self) -> f64 {
        self.pair_similarities.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks injectivity and index ranges against set sizes `p = |X|`,
    /// `q = |Y|`. A complete matching additionally has `min(p, q)` pairs.
    pub fn validate(&self, p: usize, q: usize) -> Result<()> {
        if self.pairs.len() != self.pair_similarities.len() {
            return Err(Error::invariant("pair and similarity counts differ"));
        }
        let mut xs = HashSet::new();
        let mut ys = HashSet::new();
        for &(x, y) in &self.pairs {
            if x >= p || y >= q {
                return Err(Error::invariant(format!(
                    "pair ({x}, {y}) out of range for {p}x{q} sets"
                )));
            }
            if !xs.insert(x) || !ys.insert(y) {
                return Err(Error::invariant(format!("matching is not injective at ({x}, {y})")));
            }
        }
        Ok(())
    }

    pub fn is_complete(&self, p: usize, q: usize) -> bool {
        self.validate(p, q).is_ok() && self.pairs.len() == p.min(q)
    }

    /// For every `x`, the `y` it is paired with.
    pub fn partner_of_x(&self, p: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; p];
        for &(x, y) in &self.pairs {
            out[x] = Some(y);
        }
        out
    }
}

/// Which matching algorithm a kernel evaluation uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Each `x` in index order takes its most similar unmatched `y`.
    #[default]
    Greedy,
    /// Maximum-weight assignment (Kuhn–Munkres).
    Exact,
}

impl Matcher {
    pub fn run(self, similarities: &DMatrix<f64>) -> Matching {
        match self {
            Matcher::Greedy => greedy_from_matrix(similarities),
            Matcher::Exact => optimal_from_matrix(similarities),
        }
    }
}

/// Greedy matching over a precomputed similarity matrix. Rows are visited in
/// index order; ties go to the lowest column index.
pub fn greedy_from_matrix(sim: &DMatrix<f64>) -> Matching {
    let (p, q) = sim.shape();
    let mut used = vec![false; q];
    let mut pairs = Vec::with_capacity(p.min(q));
    let mut sims = Vec::with_capacity(p.min(q));
    for x in 0..p {
        if pairs.len() == q {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for (y, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let s = sim[(x, y)];
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((y, s));
            }
        }
        if let Some((y, s)) = best {
            used[y] = true;
            pairs.push((x, y));
            sims.push(s);
        }
    }
    Matching {
        pairs,
        pair_similarities: sims,
    }
}

/// Maximum-weight matching of size `min(p, q)`. Among optimal matchings the
/// lexicographically smallest pair list is returned.
pub fn optimal_from_matrix(sim: &DMatrix<f64>) -> Matching {
    let (p, q) = sim.shape();
    let n = p.max(q);
    if n == 0 {
        return Matching {
            pairs: Vec::new(),
            pair_similarities: Vec::new(),
        };
    }
    // Square minimization problem; padded rows/columns have similarity 0.
    let cost = DMatrix::from_fn(n, n, |i, j| if i < p && j < q { -sim[(i, j)] } else { 0.0 });
    let solution = hungarian_min(&cost);
    let scale = sim.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-9 * scale;
    let tight = DMatrix::from_fn(n, n, |i, j| cost[(i, j)] - solution.row_potential[i] - solution.col_potential[j] <= tol);
    let assignment = lexicographic_tight_matching(&tight, solution.assignment);
    let mut pairs = Vec::with_capacity(p.min(q));
    let mut sims = Vec::with_capacity(p.min(q));
    for (x, &y) in assignment.iter().enumerate().take(p) {
        if y < q {
            pairs.push((x, y));
            sims.push(sim[(x, y)]);
        }
    }
    Matching {
        pairs,
        pair_similarities: sims,
    }
}

struct HungarianSolution {
    /// Column assigned to each row.
    assignment: Vec<usize>,
    row_potential: Vec<f64>,
    col_potential: Vec<f64>,
}

/// Shortest augmenting path Hungarian method on a square cost matrix.
/// Potentials satisfy `cost[i][j] - u[i] - v[j] >= 0`, with equality on the
/// returned assignment.
fn hungarian_min(cost: &DMatrix<f64>) -> HungarianSolution {
    let n = cost.nrows();
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    HungarianSolution {
        assignment,
        row_potential: u[1..].to_vec(),
        col_potential: v[1..].to_vec(),
    }
}

/// Every perfect matching inside the tight (zero reduced cost) graph is
/// optimal. Starting from one, fix rows in order to the smallest column that
/// still admits a perfect completion; completion exists iff the displaced
/// row can reach the freed column by an alternating path.
fn lexicographic_tight_matching(tight: &DMatrix<bool>, mut row_to_col: Vec<usize>) -> Vec<usize> {
    let n = row_to_col.len();
    let mut col_to_row = vec![0; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut locked_col = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if locked_col[j] || !tight[(i, j)] {
                continue;
            }
            if row_to_col[i] == j {
                break;
            }
            let displaced = col_to_row[j];
            let freed = row_to_col[i];
            let mut trial_r2c = row_to_col.clone();
            let mut trial_c2r = col_to_row.clone();
            trial_r2c[i] = j;
            trial_c2r[j] = i;
            let mut blocked = locked_col.clone();
            blocked[j] = true;
            let mut visited = vec![false; n];
            if augment(tight, displaced, freed, &blocked, &mut visited, &mut trial_r2c, &mut trial_c2r) {
                row_to_col = trial_r2c;
                col_to_row = trial_c2r;
                break;
            }
        }
        locked_col[row_to_col[i]] = true;
    }
    row_to_col
}

/// DFS for an alternating path from free `row` to free column `target`,
/// flipping the path on success.
fn augment(
    tight: &DMatrix<bool>,
    row: usize,
    target: usize,
    blocked: &[bool],
    visited: &mut [bool],
    r2c: &mut [usize],
    c2r: &mut [usize],
) -> bool {
    let n = blocked.len();
    for c in 0..n {
        if blocked[c] || visited[c] || !tight[(row, c)] {
            continue;
        }
        visited[c] = true;
        if c == target || augment(tight, c2r[c], target, blocked, visited, r2c, c2r) {
            r2c[row] = c;
            c2r[c] = row;
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_optimum() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 0.9]);
        let m = optimal_from_matrix(&s);
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        assert!((m.total() - 1.9).abs() < 1e-12);
        // greedy happens to agree here
        assert_eq!(greedy_from_matrix(&s).pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        let s = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.1, 0.8]);
        let g = greedy_from_matrix(&s);
        assert_eq!(g.pairs, vec![(0, 1), (1, 0)]);
        let o = optimal_from_matrix(&s);
        assert_eq!(o.pairs, vec![(0, 0), (1, 1)]);
        assert!(g.total() < o.total());
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let s = DMatrix::from_element(3, 3, 0.5);
        let o = optimal_from_matrix(&s);
        assert_eq!(o.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        let g = greedy_from_matrix(&s);
        assert_eq!(g.pairs, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn rectangular_shapes() {
        let wide = DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.9, 0.8, 0.1, 0.1]);
        let o = optimal_from_matrix(&wide);
        assert_eq!(o.pairs, vec![(0, 2), (1, 0)]);
        let tall = wide.transpose();
        let o = optimal_from_matrix(&tall);
        assert_eq!(o.pairs, vec![(0, 1), (2, 0)]);
        assert!(o.is_complete(3, 2));
        let g = greedy_from_matrix(&tall);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn validate_catches_non_injective() {
        let m = Matching {
            pairs: vec![(0, 1), (1, 1)],
            pair_similarities: vec![0.5, 0.5],
        };
        assert!(matches!(m.validate(2, 2), Err(Error::Invariant(_))));
    }
}
