//! Assembly of the allocation program.
//!
//! Decision vector, in order:
//!
//! ```text
//! [ u_0 .. u_{n_vr-1} | delta (virtual-robot major, task minor) | alpha (same order) ]
//! ```
//!
//! The alpha block is the stacked `[alpha_[1]; ...; alpha_[n_r]]` where each
//! `alpha_[i]` lists the columns of robot `i`'s virtual robots, so a robot's
//! alpha and delta entries are contiguous with length `n_t * m_i`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cbf::{CbfRow, TaskSpec};
use crate::dynamics::{energy_form, ModeSpec};
use crate::encoding::{MappingMatrices, ModeIndex, SpecializationSet};

use super::qp::QpProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("dimension mismatch in {block}: expected {expected}, got {got}")]
    Dimension {
        block: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("task `{0}`: n_min exceeds n_max")]
    TaskLimits(String),
    #[error("invalid parameter {0}")]
    Parameter(&'static str),
}

/// Weights and bounds of the allocation program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationParams {
    pub l1: f64,
    pub l2: f64,
    pub kappa: f64,
    pub delta_max: f64,
}

impl Default for AllocationParams {
    fn default() -> Self {
        Self {
            l1: 1e6,
            l2: 1e-4,
            kappa: 1e4,
            delta_max: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarLayout {
    pub n_t: usize,
    pub n_vr: usize,
    u_offsets: Vec<usize>,
    u_dims: Vec<usize>,
    pub n_u: usize,
    vr_robot: Vec<usize>,
    robot_vrs: Vec<Range<usize>>,
}

impl VarLayout {
    pub fn new(idx: &ModeIndex, u_dims: Vec<usize>, n_t: usize) -> Self {
        let mut u_offsets = Vec::with_capacity(u_dims.len());
        let mut off = 0;
        for d in &u_dims {
            u_offsets.push(off);
            off += d;
        }
        Self {
            n_t,
            n_vr: idx.n_vr(),
            u_offsets,
            u_dims,
            n_u: off,
            vr_robot: idx.pairs().iter().map(|p| p.0).collect(),
            robot_vrs: (0..idx.n_robots()).map(|i| idx.virtual_robots(i)).collect(),
        }
    }

    pub fn u(&self, v: usize) -> Range<usize> {
        self.u_offsets[v]..self.u_offsets[v] + self.u_dims[v]
    }

    pub fn u_dim(&self, v: usize) -> usize {
        self.u_dims[v]
    }

    pub fn n_pairs(&self) -> usize {
        self.n_t * self.n_vr
    }

    pub fn delta_offset(&self) -> usize {
        self.n_u
    }

    pub fn alpha_offset(&self) -> usize {
        self.n_u + self.n_pairs()
    }

    pub fn n_vars(&self) -> usize {
        self.n_u + 2 * self.n_pairs()
    }

    /// Position of `(v, j)` inside the delta or alpha block.
    pub fn pair(&self, v: usize, j: usize) -> usize {
        v * self.n_t + j
    }

    pub fn delta(&self, v: usize, j: usize) -> usize {
        self.delta_offset() + self.pair(v, j)
    }

    pub fn alpha(&self, v: usize, j: usize) -> usize {
        self.alpha_offset() + self.pair(v, j)
    }

    pub fn robot_of(&self, v: usize) -> usize {
        self.vr_robot[v]
    }

    pub fn n_robots(&self) -> usize {
        self.robot_vrs.len()
    }

    pub fn robot_vrs(&self, i: usize) -> Range<usize> {
        self.robot_vrs[i].clone()
    }

    /// Range of robot `i`'s entries inside the delta or alpha block.
    pub fn robot_pairs(&self, i: usize) -> Range<usize> {
        let r = &self.robot_vrs[i];
        r.start * self.n_t..r.end * self.n_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorityKind {
    /// delta of the assigned mode against another mode, same task
    Mode,
    /// delta of the assigned task against another task, same mode
    Task,
}

/// `Theta delta_[i] + Phi alpha_[i] <= Psi` for one robot, in robot-local
/// coordinates `k * n_t + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrioritizationRows {
    pub theta: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub psi: DVector<f64>,
    pub kinds: Vec<PriorityKind>,
    pub kappa: f64,
    pub delta_max: f64,
}

impl PrioritizationRows {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }
}

/// One row per `(j, k, k' != k)` and one per `(j, k, j' != j)`:
///
/// ```text
/// delta_{j,k} - delta_{j,k'} / kappa + delta_max alpha_{j,k} <= delta_max
/// delta_{j,k} - delta_{j',k} / kappa + delta_max alpha_{j,k} <= delta_max
/// ```
pub fn prioritization_rows(n_t: usize, m_i: usize, kappa: f64, delta_max: f64) -> PrioritizationRows {
    let local = |k: usize, j: usize| k * n_t + j;
    let mut entries: Vec<(PriorityKind, usize, usize, usize)> = Vec::new();
    for k in 0..m_i {
        for j in 0..n_t {
            for k2 in (0..m_i).filter(|&k2| k2 != k) {
                entries.push((PriorityKind::Mode, local(k, j), local(k2, j), local(k, j)));
            }
        }
    }
    for k in 0..m_i {
        for j in 0..n_t {
            for j2 in (0..n_t).filter(|&j2| j2 != j) {
                entries.push((PriorityKind::Task, local(k, j), local(k, j2), local(k, j)));
            }
        }
    }
    let dim = n_t * m_i;
    let rows = entries.len();
    let mut theta = DMatrix::zeros(rows, dim);
    let mut phi = DMatrix::zeros(rows, dim);
    for (r, &(_, own, other, a)) in entries.iter().enumerate() {
        theta[(r, own)] = 1.0;
        theta[(r, other)] = -1.0 / kappa;
        phi[(r, a)] = delta_max;
    }
    PrioritizationRows {
        theta,
        phi,
        psi: DVector::from_element(rows, delta_max),
        kinds: entries.iter().map(|e| e.0).collect(),
        kappa,
        delta_max,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CardinalityKind {
    /// at most one (task, mode) pair per robot
    OnePerRobot {
        robot: usize,
    },
    /// assigned robots jointly supply a required capability
    Requirement {
        task: usize,
        capability: usize,
    },
    MinRobots {
        task: usize,
    },
    MaxRobots {
        task: usize,
    },
}

/// `sum coeffs * alpha >= rhs`, with indices into the alpha block.
#[derive(Debug, Clone, PartialEq)]
pub struct CardinalityRow {
    pub kind: CardinalityKind,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl CardinalityRow {
    pub fn holds(&self, alpha: &[u8], tol: f64) -> bool {
        let lhs: f64 = self.coeffs.iter().map(|&(i, c)| c * f64::from(alpha[i])).sum();
        lhs >= self.rhs - tol
    }
}

/// The full mixed-integer program for one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct MiqpProblem {
    pub layout: VarLayout,
    /// objective `1/2 z' H z + g' z + constant`
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub cbf_rows: Vec<CbfRow>,
    /// one entry per robot
    pub prioritization: Vec<PrioritizationRows>,
    pub cardinality: Vec<CardinalityRow>,
    pub params: AllocationParams,
    /// penalty diagonals, per virtual robot
    pub penalty: Vec<Vec<u8>>,
    pub specialization: Vec<Vec<u8>>,
}

/// Everything assembled into one program.
pub struct AssemblyInputs<'a> {
    pub index: &'a ModeIndex,
    /// mode of each virtual robot
    pub modes: &'a [&'a ModeSpec],
    pub maps: &'a MappingMatrices,
    pub spec: &'a SpecializationSet,
    pub tasks: &'a [TaskSpec],
    pub cbf_rows: Vec<CbfRow>,
    pub params: AllocationParams,
}

fn expect(block: &'static str, expected: usize, got: usize) -> Result<(), AssemblyError> {
    if expected == got {
        Ok(())
    } else {
        Err(AssemblyError::Dimension { block, expected, got })
    }
}

pub fn assemble_miqp(inp: AssemblyInputs<'_>) -> Result<MiqpProblem, AssemblyError> {
    let p = inp.params;
    if !(p.kappa > 1.0) {
        return Err(AssemblyError::Parameter("kappa must exceed 1"));
    }
    if !(p.delta_max > 0.0) {
        return Err(AssemblyError::Parameter("delta_max must be positive"));
    }
    if !(p.l1 > 0.0 && p.l2 > 0.0) {
        return Err(AssemblyError::Parameter("l1 and l2 must be positive"));
    }
    let n_vr = inp.index.n_vr();
    let n_t = inp.tasks.len();
    expect("modes", n_vr, inp.modes.len())?;
    expect("F columns", n_vr, inp.maps.f.cols())?;
    expect("T rows", n_t, inp.maps.t.rows())?;
    expect("F rows / T columns", inp.maps.f.rows(), inp.maps.t.cols())?;
    expect("specialization", n_vr, inp.spec.n_vr())?;
    for v in 0..n_vr {
        expect("specialization diagonal", n_t, inp.spec.s[v].len())?;
    }
    for t in inp.tasks {
        if t.n_min > t.n_max {
            return Err(AssemblyError::TaskLimits(t.id.clone()));
        }
    }

    let layout = VarLayout::new(inp.index, inp.modes.iter().map(|m| m.input_dim()).collect(), n_t);
    for row in &inp.cbf_rows {
        if row.slack.vr >= n_vr {
            return Err(AssemblyError::Dimension {
                block: "cbf row virtual robot",
                expected: n_vr,
                got: row.slack.vr,
            });
        }
        if row.slack.task >= n_t {
            return Err(AssemblyError::Dimension {
                block: "cbf row task",
                expected: n_t,
                got: row.slack.task,
            });
        }
        expect("cbf row input", layout.u_dim(row.slack.vr), row.a.len())?;
    }

    let n = layout.n_vars();
    let mut hessian = DMatrix::zeros(n, n);
    let mut linear = DVector::zeros(n);
    let mut constant = 0.0;
    for (v, mode) in inp.modes.iter().enumerate() {
        let form = energy_form(mode);
        let r = layout.u(v);
        hessian
            .view_mut((r.start, r.start), (r.len(), r.len()))
            .copy_from(&(2.0 * &form.q));
        linear.rows_mut(r.start, r.len()).copy_from(&form.c);
        constant += form.constant;
        for j in 0..n_t {
            let d = layout.delta(v, j);
            hessian[(d, d)] = 2.0 * p.l2 * f64::from(inp.spec.s[v][j]);
            let a = layout.alpha(v, j);
            hessian[(a, a)] = 2.0 * p.l1 * f64::from(inp.spec.pi[v][j]);
        }
    }

    let prioritization: Vec<PrioritizationRows> = (0..inp.index.n_robots())
        .map(|i| prioritization_rows(n_t, inp.index.n_modes(i), p.kappa, p.delta_max))
        .collect();

    let mut cardinality = Vec::new();
    for i in 0..inp.index.n_robots() {
        let coeffs = layout.robot_pairs(i).map(|q| (q, -1.0)).collect();
        cardinality.push(CardinalityRow {
            kind: CardinalityKind::OnePerRobot { robot: i },
            coeffs,
            rhs: -1.0,
        });
    }
    for j in 0..n_t {
        for l in 0..inp.maps.t.cols() {
            let coeffs = (0..n_vr)
                .filter(|&v| inp.maps.f.get(l, v) == 1)
                .map(|v| (layout.pair(v, j), 1.0))
                .collect();
            cardinality.push(CardinalityRow {
                kind: CardinalityKind::Requirement { task: j, capability: l },
                coeffs,
                rhs: f64::from(inp.maps.t.get(j, l)),
            });
        }
    }
    for (j, task) in inp.tasks.iter().enumerate() {
        let all: Vec<(usize, f64)> = (0..n_vr).map(|v| (layout.pair(v, j), 1.0)).collect();
        cardinality.push(CardinalityRow {
            kind: CardinalityKind::MinRobots { task: j },
            coeffs: all.clone(),
            rhs: task.n_min as f64,
        });
        cardinality.push(CardinalityRow {
            kind: CardinalityKind::MaxRobots { task: j },
            coeffs: all.into_iter().map(|(q, c)| (q, -c)).collect(),
            rhs: -(task.n_max as f64),
        });
    }

    Ok(MiqpProblem {
        layout,
        hessian,
        linear,
        constant,
        cbf_rows: inp.cbf_rows,
        prioritization,
        cardinality,
        params: p,
        penalty: inp.spec.pi.clone(),
        specialization: inp.spec.s.clone(),
    })
}

/// Bound on one alpha entry inside a branch-and-bound node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaBound {
    Free,
    Fixed(u8),
}

/// A continuous QP over the free variables, with fixed alphas substituted.
#[derive(Debug, Clone)]
pub struct ReducedQp {
    pub qp: QpProblem,
    /// full-space index of each QP variable
    pub free: Vec<usize>,
    /// full-space values of substituted variables (NaN where free)
    pub fixed: DVector<f64>,
}

impl ReducedQp {
    pub fn lift(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut full = self.fixed.clone();
        for (r, &i) in self.free.iter().enumerate() {
            full[i] = x[r];
        }
        full
    }

    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| full[i]))
    }
}

impl MiqpProblem {
    pub fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    /// All linear rows in `A z >= b` form over the full decision vector.
    /// Alpha bounds are not included.
    pub fn linear_rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let l = &self.layout;
        let n = l.n_vars();
        let n_prio: usize = self.prioritization.iter().map(|p| p.len()).sum();
        let m = self.cbf_rows.len() + n_prio + self.cardinality.len() + 2 * l.n_pairs();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        let mut r = 0;
        for row in &self.cbf_rows {
            let u = l.u(row.slack.vr);
            for (c, &coef) in row.a.iter().enumerate() {
                a[(r, u.start + c)] = coef;
            }
            a[(r, l.delta(row.slack.vr, row.slack.task))] = 1.0;
            b[r] = row.b;
            r += 1;
        }
        for (i, pr) in self.prioritization.iter().enumerate() {
            let base = l.robot_pairs(i).start;
            for q in 0..pr.len() {
                for c in 0..pr.theta.ncols() {
                    a[(r, l.delta_offset() + base + c)] = -pr.theta[(q, c)];
                    a[(r, l.alpha_offset() + base + c)] = -pr.phi[(q, c)];
                }
                b[r] = -pr.psi[q];
                r += 1;
            }
        }
        for row in &self.cardinality {
            for &(q, c) in &row.coeffs {
                a[(r, l.alpha_offset() + q)] += c;
            }
            b[r] = row.rhs;
            r += 1;
        }
        for q in 0..l.n_pairs() {
            a[(r, l.delta_offset() + q)] = 1.0;
            b[r] = -self.params.delta_max;
            a[(r + 1, l.delta_offset() + q)] = -1.0;
            b[r + 1] = -self.params.delta_max;
            r += 2;
        }
        (a, b)
    }

    /// Builds the continuous QP for a node: fixed alphas are substituted,
    /// free ones are relaxed to `[0, 1]`.
    pub fn reduced_qp(&self, bounds: &[AlphaBound]) -> ReducedQp {
        let l = &self.layout;
        let n = l.n_vars();
        assert_eq!(bounds.len(), l.n_pairs());
        let (a_full, b_full) = self.linear_rows();
        let mut fixed = DVector::from_element(n, f64::NAN);
        let mut free = Vec::with_capacity(n);
        for i in 0..n {
            if i >= l.alpha_offset() {
                if let AlphaBound::Fixed(val) = bounds[i - l.alpha_offset()] {
                    fixed[i] = f64::from(val);
                    continue;
                }
            }
            free.push(i);
        }
        let fixed_idx: Vec<usize> = (0..n).filter(|i| !fixed[*i].is_nan()).collect();
        let xf = DVector::from_iterator(fixed_idx.len(), fixed_idx.iter().map(|&i| fixed[i]));
        let nf = free.len();

        let h = DMatrix::from_fn(nf, nf, |r, c| self.hessian[(free[r], free[c])]);
        let h_cross = DMatrix::from_fn(nf, fixed_idx.len(), |r, c| self.hessian[(free[r], fixed_idx[c])]);
        let h_ff = DMatrix::from_fn(fixed_idx.len(), fixed_idx.len(), |r, c| {
            self.hessian[(fixed_idx[r], fixed_idx[c])]
        });
        let g_free = DVector::from_iterator(nf, free.iter().map(|&i| self.linear[i]));
        let g_fixed = DVector::from_iterator(fixed_idx.len(), fixed_idx.iter().map(|&i| self.linear[i]));
        let g = g_free + &h_cross * &xf;
        let constant = self.constant + g_fixed.dot(&xf) + 0.5 * xf.dot(&(&h_ff * &xf));

        let n_free_alpha = bounds.iter().filter(|b| **b == AlphaBound::Free).count();
        let m = a_full.nrows() + 2 * n_free_alpha;
        let mut a = DMatrix::zeros(m, nf);
        let mut b = DVector::zeros(m);
        for r in 0..a_full.nrows() {
            let mut rhs = b_full[r];
            for (c, &i) in fixed_idx.iter().enumerate() {
                rhs -= a_full[(r, i)] * xf[c];
            }
            for (c, &i) in free.iter().enumerate() {
                a[(r, c)] = a_full[(r, i)];
            }
            b[r] = rhs;
        }
        let mut r = a_full.nrows();
        for (c, &i) in free.iter().enumerate() {
            if i >= l.alpha_offset() {
                a[(r, c)] = 1.0;
                b[r] = 0.0;
                a[(r + 1, c)] = -1.0;
                b[r + 1] = -1.0;
                r += 2;
            }
        }
        ReducedQp {
            qp: QpProblem { h, g, constant, a, b },
            free,
            fixed,
        }
    }

    /// Whether a binary assignment satisfies the cardinality rows.
    pub fn cardinality_holds(&self, alpha: &[u8]) -> bool {
        self.cardinality.iter().all(|r| r.holds(alpha, 1e-9))
    }
}
