//! Shortest-augmenting-path Hungarian method with a lexicographic tie pass.

use super::{CostMatrix, Matching};

/// Row/column duals `u`, `v` with `c[i][j] - u[i] - v[j] >= 0` and equality on
/// the returned assignment.
pub(super) struct Solution {
    pub assignment: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub(super) fn hungarian(c: &CostMatrix) -> Solution {
    let n = c.n();
    let a = |i: usize, j: usize| c.get(i - 1, j - 1);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1]; // column -> row, 1-based, 0 = free
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
                let cur = a(i0, j) - u[i0] - v[j];
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
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    Solution { assignment, u: u[1..].to_vec(), v: v[1..].to_vec() }
}

/// Among optimal assignments, picks the lexicographically smallest.
///
/// Every optimal assignment uses only edges with zero reduced cost under the
/// optimal duals, so the search runs over perfect matchings of that tight
/// subgraph: rows are fixed in order, each to the smallest column that still
/// admits a completion.
pub(super) fn lexicographic_optimum(c: &CostMatrix) -> Matching {
    let n = c.n();
    let sol = hungarian(c);
    let scale = 1.0 + c.max_cost();
    let tol = 1e-11 * scale;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| c.get(i, j) - sol.u[i] - sol.v[j] <= tol || sol.assignment[i] == j).collect())
        .collect();

    let mut col_of = sol.assignment;
    let mut row_of = vec![0usize; n];
    for (i, &j) in col_of.iter().enumerate() {
        row_of[j] = i;
    }
    let mut fixed = vec![false; n];
    let mut seen = vec![false; n];

    for i in 0..n {
        for &j in &tight[i] {
            if fixed[j] {
                continue;
            }
            if j == col_of[i] {
                break;
            }
            // Row i takes j; j's owner must reach i's old column through tight edges.
            let displaced = row_of[j];
            let target = col_of[i];
            seen.iter_mut().for_each(|s| *s = false);
            seen[j] = true;
            let mut ctx = Search { tight: &tight, fixed: &fixed, seen: &mut seen, col_of: &mut col_of, row_of: &mut row_of, target };
            if ctx.augment(displaced) {
                col_of[i] = j;
                row_of[j] = i;
                break;
            }
        }
        fixed[col_of[i]] = true;
    }
    let total_cost = col_of.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
    Matching { assignment: col_of, total_cost }
}

struct Search<'a> {
    tight: &'a [Vec<usize>],
    fixed: &'a [bool],
    seen: &'a mut [bool],
    col_of: &'a mut [usize],
    row_of: &'a mut [usize],
    target: usize,
}

impl Search<'_> {
    fn augment(&mut self, row: usize) -> bool {
        for &c in &self.tight[row] {
            if self.fixed[c] || self.seen[c] {
                continue;
            }
            self.seen[c] = true;
            if c == self.target || self.augment(self.row_of[c]) {
                self.col_of[row] = c;
                self.row_of[c] = row;
                return true;
            }
        }
        false
    }
}
