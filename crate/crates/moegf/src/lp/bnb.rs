//! Best-first branch-and-bound over binary variables.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::simplex::{lp_solve_warm, WarmStart};
use super::{LpProblem, LpSolution, LpStatus, SimplexOptions};
use crate::math::abs;

/// Branch-and-bound settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbOptions {
    pub int_tol: f64,
    /// Maximum number of LP solves.
    pub max_nodes: usize,
    pub simplex: SimplexOptions,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions { int_tol: 1e-6, max_nodes: 20_000, simplex: SimplexOptions::default() }
    }
}

/// MILP result with search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BnbSolution {
    pub solution: LpSolution,
    /// Number of LP relaxations solved.
    pub lp_solves: usize,
    /// Number of nodes that were branched on.
    pub branched: usize,
    /// False if the node limit stopped the search early.
    pub complete: bool,
    /// `(parent bound, child bound)` for every solved child node.
    pub bound_pairs: Vec<(f64, f64)>,
    /// Valid global lower bound; equals the objective when the search completed.
    pub best_bound: f64,
    /// Optimal basis of the root relaxation.
    pub root_basis: Option<WarmStart>,
}

#[derive(Debug, Clone)]
struct Node {
    id: usize,
    bound: f64,
    /// `bound` rounded to a relative 1e-9 grid for ordering.
    key: f64,
    fixes: Vec<(usize, f64)>,
    warm: Option<WarmStart>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: smaller bound first, then the newest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.total_cmp(&self.key).then_with(|| self.id.cmp(&other.id))
    }
}

fn order_key(bound: f64) -> f64 {
    if !bound.is_finite() {
        return bound;
    }
    let q = 1e-9 * abs(bound).max(1.0);
    libm::round(bound / q) * q
}

/// Solves the MILP with default settings.
pub fn bnb_solve(problem: &LpProblem, binaries: &[usize]) -> BnbSolution {
    bnb_solve_with(problem, binaries, &BnbOptions::default())
}

fn most_fractional(x: &[f64], binaries: &[usize], tol: f64) -> Option<usize> {
    let mut best = None;
    let mut score = tol;
    for &j in binaries {
        let f = (x[j] - libm::floor(x[j])).min(libm::ceil(x[j]) - x[j]);
        if f > score {
            score = f;
            best = Some(j);
        }
    }
    best
}

/// Solves the MILP with explicit settings.
pub fn bnb_solve_with(problem: &LpProblem, binaries: &[usize], opts: &BnbOptions) -> BnbSolution {
    bnb_solve_warm(problem, binaries, opts, None)
}

/// Solves the MILP with the root relaxation warm-started from `root`.
pub fn bnb_solve_warm(problem: &LpProblem, binaries: &[usize], opts: &BnbOptions, root: Option<&WarmStart>) -> BnbSolution {
    let n = problem.num_vars();
    let mut incumbent: Option<LpSolution> = None;
    let mut inc_val = f64::INFINITY;
    let mut lp_solves = 0usize;
    let mut branched = 0usize;
    let mut bound_pairs = Vec::new();
    let mut next_id = 0usize;
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut complete = true;
    let mut last: Option<LpSolution> = None;
    let mut lower = problem.lower.clone();
    let mut upper = problem.upper.clone();
    let mut open_bound = f64::INFINITY;

    heap.push(Node { id: next_id, bound: f64::NEG_INFINITY, key: f64::NEG_INFINITY, fixes: Vec::new(), warm: root.cloned() });
    let mut root_basis = None;
    next_id += 1;
    while let Some(node) = heap.pop() {
        let prune_tol = 1e-9 * inc_val.abs().max(1.0);
        if node.bound >= inc_val - prune_tol {
            continue;
        }
        if lp_solves >= opts.max_nodes {
            complete = false;
            open_bound = open_bound.min(node.bound);
            break;
        }
        lower.copy_from_slice(&problem.lower);
        upper.copy_from_slice(&problem.upper);
        for &(j, v) in &node.fixes {
            lower[j] = v;
            upper[j] = v;
        }
        let (sol, warm) = lp_solve_warm(problem, &lower, &upper, &opts.simplex, node.warm.as_ref());
        lp_solves += 1;
        if node.id == 0 {
            root_basis = warm.clone();
        }
        if node.id != 0 && sol.status == LpStatus::Optimal {
            bound_pairs.push((node.bound, sol.objective));
        }
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            _ => {
                complete = false;
                open_bound = open_bound.min(node.bound);
                last = Some(sol);
                continue;
            }
        }
        if sol.objective >= inc_val - prune_tol {
            continue;
        }
        match most_fractional(&sol.x, binaries, opts.int_tol) {
            None => {
                inc_val = sol.objective;
                incumbent = Some(sol);
            }
            Some(j) => {
                branched += 1;
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    heap.push(Node { id: next_id, bound: sol.objective, key: order_key(sol.objective), fixes, warm: warm.clone() });
                    next_id += 1;
                }
            }
        }
    }
    let solution = match incumbent {
        Some(s) => s,
        None => {
            let status = match last {
                Some(ref s) if !complete => s.status,
                _ if !complete => LpStatus::IterationLimit,
                _ => LpStatus::Infeasible,
            };
            LpSolution {
                status,
                x: alloc::vec![0.0; n],
                objective: f64::INFINITY,
                duals: alloc::vec![0.0; problem.rows.len()],
                iterations: 0,
            }
        }
    };
    let best_bound = inc_val.min(open_bound);
    BnbSolution { solution, lp_solves, branched, complete, bound_pairs, best_bound, root_basis }
}
