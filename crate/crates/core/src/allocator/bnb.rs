//! Branch-and-bound over the alpha block.
//!
//! Leaves are always costed by [`solve_qp_fixed_alpha`], so the search and
//! [`enumerate_exhaustive`] see identical leaf costs. Among leaves within
//! `tie_tol(c*)` of the optimum the lexicographically smallest alpha wins.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::DVector;
use thiserror::Error;

use super::problem::{AlphaBound, MiqpProblem};
use super::qp::{self, QpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("alpha does not satisfy the cardinality constraints")]
    InvalidAssignment,
    #[error("alpha has length {got}, expected {expected}")]
    AlphaLength { expected: usize, got: usize },
    #[error("exhaustive enumeration refused: {0} binaries (limit 12)")]
    TooLarge(usize),
    #[error("qp solver failed: {0}")]
    Qp(QpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// node budget exhausted, best incumbent returned
    NodeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    /// virtual-robot major, task minor
    pub alpha: Vec<u8>,
    pub u: Vec<Vec<f64>>,
    /// same order as `alpha`
    pub delta: Vec<f64>,
    pub cost: f64,
    pub status: SolveStatus,
    pub nodes: usize,
    /// largest KKT residual over the fixed-alpha subproblems solved
    pub max_kkt: f64,
    /// full decision vector
    pub primal: DVector<f64>,
}

impl AllocationSolution {
    fn infeasible(problem: &MiqpProblem, nodes: usize, max_kkt: f64) -> Self {
        let l = &problem.layout;
        Self {
            alpha: vec![0; l.n_pairs()],
            u: (0..l.n_vr).map(|v| vec![0.0; l.u_dim(v)]).collect(),
            delta: vec![0.0; l.n_pairs()],
            cost: f64::INFINITY,
            status: SolveStatus::Infeasible,
            nodes,
            max_kkt,
            primal: DVector::zeros(l.n_vars()),
        }
    }

    /// The `(virtual robot, task)` pairs with alpha = 1.
    pub fn assignments(&self, n_t: usize) -> Vec<(usize, usize)> {
        self.alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == 1)
            .map(|(q, _)| (q / n_t, q % n_t))
            .collect()
    }
}

/// Result of the continuous program for a fixed assignment.
#[derive(Debug, Clone, PartialEq)]
pub enum FixedAlphaResult {
    Optimal { cost: f64, primal: DVector<f64>, kkt: f64 },
    Infeasible,
}

pub fn tie_tol(cost: f64) -> f64 {
    1e-9 * cost.abs().max(1.0)
}

pub fn solve_qp_fixed_alpha(
    problem: &MiqpProblem,
    alpha: &[u8],
    hint: Option<&DVector<f64>>,
) -> Result<FixedAlphaResult, AllocError> {
    let n = problem.layout.n_pairs();
    if alpha.len() != n {
        return Err(AllocError::AlphaLength {
            expected: n,
            got: alpha.len(),
        });
    }
    if alpha.iter().any(|a| *a > 1) || !problem.cardinality_holds(alpha) {
        return Err(AllocError::InvalidAssignment);
    }
    let bounds: Vec<AlphaBound> = alpha.iter().map(|a| AlphaBound::Fixed(*a)).collect();
    let red = problem.reduced_qp(&bounds);
    let h = hint.map(|x| red.restrict(x));
    match qp::solve(&red.qp, h.as_ref()) {
        Ok(sol) => Ok(FixedAlphaResult::Optimal {
            cost: sol.objective,
            primal: red.lift(&sol.x),
            kkt: sol.kkt.max(),
        }),
        Err(QpError::Infeasible { .. }) => Ok(FixedAlphaResult::Infeasible),
        Err(e) => Err(AllocError::Qp(e)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbOptions {
    pub node_limit: usize,
    /// assignment tried first as the incumbent
    pub warm_alpha: Option<Vec<u8>>,
    /// full decision vector used to seed the QP solves
    pub warm_primal: Option<DVector<f64>>,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            node_limit: 10_000,
            warm_alpha: None,
            warm_primal: None,
        }
    }
}

struct Node {
    bounds: Vec<AlphaBound>,
    lb: f64,
    seq: usize,
    hint: Option<DVector<f64>>,
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
    // max-heap: smallest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other.lb.total_cmp(&self.lb).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Clone)]
struct Leaf {
    alpha: Vec<u8>,
    cost: f64,
    primal: DVector<f64>,
}

/// Leaf bookkeeping shared by the search and the exhaustive enumerator.
struct Leaves<'a> {
    problem: &'a MiqpProblem,
    cache: HashMap<Vec<u8>, Option<Leaf>>,
    max_kkt: f64,
}

impl<'a> Leaves<'a> {
    fn new(problem: &'a MiqpProblem) -> Self {
        Self {
            problem,
            cache: HashMap::new(),
            max_kkt: 0.0,
        }
    }

    fn eval(&mut self, alpha: &[u8], hint: Option<&DVector<f64>>) -> Result<(), AllocError> {
        if self.cache.contains_key(alpha) {
            return Ok(());
        }
        let leaf = match solve_qp_fixed_alpha(self.problem, alpha, hint)? {
            FixedAlphaResult::Optimal { cost, primal, kkt } => {
                self.max_kkt = self.max_kkt.max(kkt);
                Some(Leaf {
                    alpha: alpha.to_vec(),
                    cost,
                    primal,
                })
            }
            FixedAlphaResult::Infeasible => None,
        };
        self.cache.insert(alpha.to_vec(), leaf);
        Ok(())
    }

    fn best_cost(&self) -> Option<f64> {
        self.cache
            .values()
            .flatten()
            .map(|l| l.cost)
            .min_by(|a, b| a.total_cmp(b))
    }

    fn winner(&self) -> Option<&Leaf> {
        let c = self.best_cost()?;
        self.cache
            .values()
            .flatten()
            .filter(|l| l.cost <= c + tie_tol(c))
            .min_by(|a, b| a.alpha.cmp(&b.alpha))
    }

    fn into_solution(self, status: SolveStatus, nodes: usize) -> AllocationSolution {
        let max_kkt = self.max_kkt;
        match self.winner() {
            None => AllocationSolution::infeasible(self.problem, nodes, max_kkt),
            Some(w) => {
                let l = &self.problem.layout;
                let p = &w.primal;
                AllocationSolution {
                    alpha: w.alpha.clone(),
                    u: (0..l.n_vr).map(|v| l.u(v).map(|i| p[i]).collect()).collect(),
                    delta: (0..l.n_pairs()).map(|q| p[l.delta_offset() + q]).collect(),
                    cost: w.cost,
                    status,
                    nodes,
                    max_kkt,
                    primal: p.clone(),
                }
            }
        }
    }
}

fn lexmin(bounds: &[AlphaBound]) -> Vec<u8> {
    bounds
        .iter()
        .map(|b| match b {
            AlphaBound::Fixed(v) => *v,
            AlphaBound::Free => 0,
        })
        .collect()
}

const INTEGRAL_TOL: f64 = 1e-7;

/// Solves the allocation program by best-bound branch-and-bound.
pub fn solve_allocation(problem: &MiqpProblem, opts: &BnbOptions) -> Result<AllocationSolution, AllocError> {
    let l = &problem.layout;
    let n = l.n_pairs();
    let mut leaves = Leaves::new(problem);

    if let Some(w) = &opts.warm_alpha {
        if w.len() == n && w.iter().all(|a| *a <= 1) && problem.cardinality_holds(w) {
            leaves.eval(w, opts.warm_primal.as_ref())?;
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node {
        bounds: vec![AlphaBound::Free; n],
        lb: f64::NEG_INFINITY,
        seq,
        hint: opts.warm_primal.clone(),
    });
    let mut nodes = 0usize;
    let mut status = SolveStatus::Optimal;

    let prune = |leaves: &Leaves<'_>, bounds: &[AlphaBound], lb: f64| -> bool {
        let Some(best) = leaves.best_cost() else { return false };
        if lb > best + 2.0 * tie_tol(best) {
            return true;
        }
        let w = leaves.winner().expect("winner exists when a best cost does");
        lb >= w.cost && lexmin(bounds) > w.alpha
    };

    while let Some(node) = heap.pop() {
        if prune(&leaves, &node.bounds, node.lb) {
            continue;
        }
        if node.bounds.iter().all(|b| *b != AlphaBound::Free) {
            let alpha = lexmin(&node.bounds);
            if problem.cardinality_holds(&alpha) {
                leaves.eval(&alpha, node.hint.as_ref())?;
            }
            continue;
        }
        if nodes >= opts.node_limit {
            status = SolveStatus::NodeLimit;
            break;
        }
        nodes += 1;

        let red = problem.reduced_qp(&node.bounds);
        let hint = node.hint.as_ref().map(|x| {
            let mut r = red.restrict(x);
            for (k, &i) in red.free.iter().enumerate() {
                if i >= l.alpha_offset() {
                    r[k] = r[k].clamp(0.0, 1.0);
                }
            }
            r
        });
        let sol = match qp::solve(&red.qp, hint.as_ref()) {
            Ok(s) => s,
            Err(QpError::Infeasible { .. }) => continue,
            Err(e) => return Err(AllocError::Qp(e)),
        };
        let lb = sol.objective;
        if prune(&leaves, &node.bounds, lb) {
            continue;
        }
        let full = red.lift(&sol.x);
        let alpha_val = |q: usize| full[l.alpha_offset() + q];

        let free: Vec<usize> = (0..n).filter(|&q| node.bounds[q] == AlphaBound::Free).collect();
        let mut branch = None;
        let mut best_frac = INTEGRAL_TOL;
        for &q in &free {
            let a = alpha_val(q);
            let frac = a.min(1.0 - a);
            if frac > best_frac {
                best_frac = frac;
                branch = Some(q);
            }
        }
        if branch.is_none() {
            let rounded: Vec<u8> = (0..n).map(|q| u8::from(alpha_val(q) > 0.5)).collect();
            let mut leaf_cost = f64::INFINITY;
            if problem.cardinality_holds(&rounded) {
                leaves.eval(&rounded, Some(&full))?;
                if let Some(Some(leaf)) = leaves.cache.get(&rounded) {
                    leaf_cost = leaf.cost;
                }
            }
            branch = if leaf_cost <= lb + tie_tol(lb) {
                free.iter().copied().find(|&q| rounded[q] == 1)
            } else {
                // rounding moved the cost: split on the least integral entry
                free.iter().copied().max_by(|&a, &b| {
                    let fa = alpha_val(a).min(1.0 - alpha_val(a));
                    let fb = alpha_val(b).min(1.0 - alpha_val(b));
                    fa.total_cmp(&fb).then(b.cmp(&a))
                })
            };
        }
        let Some(q) = branch else { continue };
        for val in [0u8, 1] {
            let mut b = node.bounds.clone();
            b[q] = AlphaBound::Fixed(val);
            seq += 1;
            heap.push(Node {
                bounds: b,
                lb,
                seq,
                hint: Some(full.clone()),
            });
        }
    }

    Ok(leaves.into_solution(status, nodes))
}

/// Enumerates every binary assignment. Refuses more than 12 binaries.
pub fn enumerate_exhaustive(problem: &MiqpProblem) -> Result<AllocationSolution, AllocError> {
    let n = problem.layout.n_pairs();
    if n > 12 {
        return Err(AllocError::TooLarge(n));
    }
    let mut leaves = Leaves::new(problem);
    let mut count = 0;
    for bits in 0u32..(1 << n) {
        let alpha: Vec<u8> = (0..n).map(|q| ((bits >> (n - 1 - q)) & 1) as u8).collect();
        if problem.cardinality_holds(&alpha) {
            leaves.eval(&alpha, None)?;
            count += 1;
        }
    }
    Ok(leaves.into_solution(SolveStatus::Optimal, count))
}
