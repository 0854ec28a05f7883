//! Earth Mover's Distance between equal-size point sets.
//!
//! The distance is the minimum, over bijections `φ`, of `Σ ||p_i − q_φ(i)||`.
//! Gradients hold the optimal matching fixed, which is valid wherever the
//! optimum is unique (almost everywhere). Matched pairs at zero distance sit
//! on the norm's kink and contribute zero gradient.

mod auction;
mod hungarian;

use crate::geometry::{PointCloud, Point3};
use crate::{Error, Result};

/// Point-set size up to which [`EmdSolver::Auto`] uses the exact solver.
pub const EXACT_SOLVER_LIMIT: usize = 256;
pub const DEFAULT_AUCTION_EPSILON: f64 = 1e-6;

/// Dense `n × n` matrix of non-negative finite costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, costs: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("cost matrix must be at least 1x1".into()));
        }
        if costs.len() != n * n {
            return Err(Error::Shape(format!("{} costs for a {n}x{n} matrix", costs.len())));
        }
        if let Some(k) = costs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite cost at ({}, {})", k / n, k % n)));
        }
        if let Some(k) = costs.iter().position(|&c| c < 0.0) {
            return Err(Error::InvalidInput(format!("negative cost at ({}, {})", k / n, k % n)));
        }
        Ok(Self { n, costs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("cost matrix rows must all have length n".into()));
        }
        Self::new(n, rows.concat())
    }

    /// Euclidean distances between two equal-size clouds.
    pub fn from_clouds(p: &PointCloud, q: &PointCloud) -> Result<Self> {
        check_sizes(p, q)?;
        let n = p.len();
        let mut costs = Vec::with_capacity(n * n);
        for a in p.points() {
            costs.extend(q.points().iter().map(|b| distance(*a, *b)));
        }
        Self::new(n, costs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.n + j]
    }

    pub fn max_cost(&self) -> f64 {
        self.costs.iter().copied().fold(0.0, f64::max)
    }

    pub fn cost_of(&self, assignment: &[usize]) -> f64 {
        assignment.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }
}

/// A bijection `assignment[i] = j` and its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub assignment: Vec<usize>,
    pub total_cost: f64,
}

impl Matching {
    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.assignment.len()];
        self.assignment.iter().all(|&j| j < seen.len() && !std::mem::replace(&mut seen[j], true))
    }
}

/// Globally optimal assignment; among equal-cost optima, the lexicographically
/// smallest assignment array.
pub fn solve_assignment_exact(c: &CostMatrix) -> Matching {
    hungarian::lexicographic_optimum(c)
}

/// ε-scaling auction. The returned cost is within `n·epsilon` of optimal.
pub fn solve_assignment_auction(c: &CostMatrix, epsilon: f64) -> Result<Matching> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("auction epsilon must be positive, got {epsilon}")));
    }
    Ok(auction::auction(c, epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmdSolver {
    Exact,
    Auction { epsilon: f64 },
    /// Exact up to [`EXACT_SOLVER_LIMIT`] points, auction above.
    Auto,
}

impl Default for EmdSolver {
    fn default() -> Self {
        EmdSolver::Auto
    }
}

impl EmdSolver {
    pub fn solve(&self, c: &CostMatrix) -> Result<Matching> {
        match *self {
            EmdSolver::Exact => Ok(solve_assignment_exact(c)),
            EmdSolver::Auction { epsilon } => solve_assignment_auction(c, epsilon),
            EmdSolver::Auto if c.n() <= EXACT_SOLVER_LIMIT => Ok(solve_assignment_exact(c)),
            EmdSolver::Auto => solve_assignment_auction(c, DEFAULT_AUCTION_EPSILON),
        }
    }
}

/// How matched-pair distances are combined into one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmdReduction {
    #[default]
    Sum,
    /// Sum divided by the number of points.
    Mean,
}

#[derive(Debug, Clone)]
pub struct EmdOutput {
    pub value: f64,
    /// `N × 3` row-major gradient w.r.t. `p`.
    pub dp: Vec<f64>,
    /// `N × 3` row-major gradient w.r.t. `q`.
    pub dq: Vec<f64>,
    pub matching: Matching,
}

#[inline]
fn distance(a: Point3, b: Point3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn check_sizes(p: &PointCloud, q: &PointCloud) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "EMD needs equal-size point sets, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Summed EMD with gradients through the fixed optimal matching.
pub fn emd_loss(p: &PointCloud, q: &PointCloud, solver: EmdSolver) -> Result<EmdOutput> {
    emd_loss_with(p, q, solver, EmdReduction::Sum)
}

pub fn emd_loss_with(p: &PointCloud, q: &PointCloud, solver: EmdSolver, reduction: EmdReduction) -> Result<EmdOutput> {
    check_sizes(p, q)?;
    let n = p.len();
    let matching = solver.solve(&CostMatrix::from_clouds(p, q)?)?;
    let scale = match reduction {
        EmdReduction::Sum => 1.0,
        EmdReduction::Mean => 1.0 / n as f64,
    };
    let mut value = 0.0;
    let mut dp = vec![0.0; 3 * n];
    let mut dq = vec![0.0; 3 * n];
    for (i, &j) in matching.assignment.iter().enumerate() {
        let (a, b) = (p.points()[i], q.points()[j]);
        let d = distance(a, b);
        value += d;
        if d > 0.0 {
            for k in 0..3 {
                let g = scale * (a[k] - b[k]) / d;
                dp[3 * i + k] = g;
                dq[3 * j + k] = -g;
            }
        }
    }
    Ok(EmdOutput { value: value * scale, dp, dq, matching })
}
