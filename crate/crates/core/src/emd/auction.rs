//! Forward auction with ε-scaling, in Gauss–Seidel form.

use std::collections::VecDeque;

use super::{CostMatrix, Matching};

const SCALE_FACTOR: f64 = 5.0;

pub(super) fn auction(c: &CostMatrix, epsilon: f64) -> Matching {
    let n = c.n();
    if n == 1 {
        return Matching { assignment: vec![0], total_cost: c.get(0, 0) };
    }
    let mut price = vec![0.0; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut col_of: Vec<Option<usize>> = vec![None; n];
    let mut eps = (c.max_cost() / 4.0).max(epsilon);
    loop {
        owner.iter_mut().for_each(|o| *o = None);
        col_of.iter_mut().for_each(|o| *o = None);
        let mut queue: VecDeque<usize> = (0..n).collect();
        while let Some(i) = queue.pop_front() {
            // maximize benefit -c[i][j] - price[j]
            let (mut best, mut best_j, mut second) = (f64::NEG_INFINITY, 0, f64::NEG_INFINITY);
            for (j, &p) in price.iter().enumerate() {
                let val = -c.get(i, j) - p;
                if val > best {
                    second = best;
                    best = val;
                    best_j = j;
                } else if val > second {
                    second = val;
                }
            }
            price[best_j] += best - second + eps;
            if let Some(prev) = owner[best_j].replace(i) {
                col_of[prev] = None;
                queue.push_back(prev);
            }
            col_of[i] = Some(best_j);
        }
        if eps <= epsilon {
            break;
        }
        eps = (eps / SCALE_FACTOR).max(epsilon);
    }
    let assignment: Vec<usize> = col_of.into_iter().map(|j| j.expect("auction leaves no row unassigned")).collect();
    let total_cost = assignment.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
    Matching { assignment, total_cost }
}
