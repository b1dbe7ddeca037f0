//! Numerical checks of the LMI convergence certificates.
//!
//! Everything is expressed in the stacked vector
//!
//! ```text
//!     phi = [ first ; u ; delta ; alpha ; 1 ]
//! ```
//!
//! where `u`, `delta` and `alpha` use the allocator's variable order and
//! `first` has one entry per task. With kinematic robots `first = gamma1(h)`;
//! with inner-state (UAV) robots `first = h`. Task `j`'s barrier is the sum
//! of `h_j(x_i)` over the robots currently assigned to it.
//!
//! The certificate asks for positive `tau` with
//! `B0 <= tau1 B1 + tau2 B2 + tau3 B3` (first proposition) or the same with
//! `B0'` in place of `B0` (second proposition). The search here is a plain
//! grid over `tau`, so a failed search does not prove infeasibility.
//!
//! Conventions fixed by this module:
//!
//! * `B0(1,2)` carries `gamma' dh/dx G u`, the input term of `d/dt gamma(h)`.
//! * `B1` pairs each constraint row `a' u - b + delta >= 0` with its slack,
//!   so `phi' B1 phi = -sum_r delta_r (a_r' u - b_r + delta_r)` minus
//!   `delta_q^2` for slacks without a row.
//! * `B0'` is signed so that `phi' B0' phi = -V'' - (c1 + c2) V' - c1 c2 V`
//!   for `V = h' h`.

mod jacobi;

pub use jacobi::{asymmetry, jacobi_eigen, jacobi_eigenvalues, psd_margin, Eigen};

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::allocator::MiqpProblem;
use crate::cbf::{task_h, LieTerms, TaskSpec};
use crate::dynamics::{inner_drift, ModeSpec, UavState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvergenceError {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("block {block}: formula is {got:?}, layout expects {expected:?}")]
    BlockDimension {
        block: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("phi block `{0}` is empty")]
    EmptyBlock(&'static str),
    #[error("tau grid is empty")]
    EmptyGrid,
    #[error("tau grid value {0} is not positive")]
    NonPositiveGrid(f64),
    #[error("scalar `{0}` must be positive")]
    Scalar(&'static str),
    #[error("inconsistent inputs: {0}")]
    Inputs(String),
}

/// Which certificate to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Proposition {
    /// Kinematic robots, `B0`.
    First,
    /// Inner-state robots under the second barrier, `B0'`.
    Second,
}

impl Proposition {
    pub fn as_str(self) -> &'static str {
        match self {
            Proposition::First => "first",
            Proposition::Second => "second",
        }
    }
}

pub const BLOCK_NAMES: [&str; 5] = ["first", "u", "delta", "alpha", "one"];

/// Block sizes and offsets of `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhiLayout {
    sizes: [usize; 5],
    offsets: [usize; 5],
}

impl PhiLayout {
    pub fn new(n_first: usize, n_u: usize, n_delta: usize, n_alpha: usize) -> Result<Self, ConvergenceError> {
        let sizes = [n_first, n_u, n_delta, n_alpha, 1];
        if let Some(k) = sizes.iter().position(|s| *s == 0) {
            return Err(ConvergenceError::EmptyBlock(BLOCK_NAMES[k]));
        }
        let mut offsets = [0; 5];
        for k in 1..5 {
            offsets[k] = offsets[k - 1] + sizes[k - 1];
        }
        Ok(Self { sizes, offsets })
    }

    /// Layout matching an allocation program.
    pub fn for_problem(problem: &MiqpProblem) -> Result<Self, ConvergenceError> {
        let l = &problem.layout;
        Self::new(l.n_t, l.n_u, l.n_pairs(), l.n_pairs())
    }

    pub fn size(&self, block: usize) -> usize {
        self.sizes[block]
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn block(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block] + self.sizes[block]
    }

    pub fn dim(&self) -> usize {
        self.offsets[4] + 1
    }
}

/// `c`, `c1`, `c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateScalars {
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for CertificateScalars {
    fn default() -> Self {
        Self {
            c: 1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

/// Constraint rows rewritten as `A x <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForms {
    pub a_alpha: DMatrix<f64>,
    pub b_alpha: DVector<f64>,
    pub a_delta: DMatrix<f64>,
    pub b_delta: DVector<f64>,
}

impl QuadraticForms {
    /// `alpha' A' (A alpha - b)`; non-positive when the quadratic form holds.
    pub fn alpha_form(&self, alpha: &DVector<f64>) -> f64 {
        let aa = &self.a_alpha * alpha;
        aa.dot(&(&aa - &self.b_alpha))
    }

    pub fn delta_form(&self, delta: &DVector<f64>) -> f64 {
        let ad = &self.a_delta * delta;
        ad.dot(&(&ad - &self.b_delta))
    }
}

/// Cardinality rows as `A_alpha alpha <= b_alpha` (one row each, in the
/// allocator's order) and the slack box as `[I; -I] delta <= delta_max`.
pub fn quadratic_constraint_forms(problem: &MiqpProblem) -> QuadraticForms {
    let n = problem.layout.n_pairs();
    let rows = &problem.cardinality;
    let mut a_alpha = DMatrix::zeros(rows.len(), n);
    let mut b_alpha = DVector::zeros(rows.len());
    for (r, row) in rows.iter().enumerate() {
        for &(q, c) in &row.coeffs {
            a_alpha[(r, q)] -= c;
        }
        b_alpha[r] = -row.rhs;
    }
    let mut a_delta = DMatrix::zeros(2 * n, n);
    for q in 0..n {
        a_delta[(q, q)] = 1.0;
        a_delta[(n + q, q)] = -1.0;
    }
    let b_delta = DVector::from_element(2 * n, problem.params.delta_max);
    QuadraticForms {
        a_alpha,
        b_alpha,
        a_delta,
        b_delta,
    }
}

/// State of the closed loop at which the certificate is evaluated.
#[derive(Debug, Clone, Copy)]
pub struct CertificateInputs<'a> {
    pub problem: &'a MiqpProblem,
    /// One per physical robot.
    pub states: &'a [UavState],
    /// One per virtual robot.
    pub modes: &'a [&'a ModeSpec],
    pub tasks: &'a [TaskSpec],
    /// Binary assignment in pair order.
    pub alpha: &'a [u8],
    pub k_v: f64,
}

/// Robot `i` drives task `task` with virtual robot `vr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub robot: usize,
    pub vr: usize,
    pub task: usize,
}

impl CertificateInputs<'_> {
    fn check(&self) -> Result<(), ConvergenceError> {
        let l = &self.problem.layout;
        let err = |what: &str, expected: usize, got: usize| {
            Err(ConvergenceError::Inputs(format!(
                "{what}: expected {expected}, got {got}"
            )))
        };
        if self.states.len() != l.n_robots() {
            return err("states", l.n_robots(), self.states.len());
        }
        if self.modes.len() != l.n_vr {
            return err("modes", l.n_vr, self.modes.len());
        }
        if self.tasks.len() != l.n_t {
            return err("tasks", l.n_t, self.tasks.len());
        }
        if self.alpha.len() != l.n_pairs() {
            return err("alpha", l.n_pairs(), self.alpha.len());
        }
        Ok(())
    }

    /// First active pair of every robot.
    pub fn assignments(&self) -> Vec<Assignment> {
        let l = &self.problem.layout;
        (0..l.n_robots())
            .filter_map(|i| {
                l.robot_pairs(i).find(|&q| self.alpha[q] == 1).map(|q| Assignment {
                    robot: i,
                    vr: q / l.n_t,
                    task: q % l.n_t,
                })
            })
            .collect()
    }

    /// Second proposition as soon as an assigned mode has inner dynamics.
    pub fn proposition(&self) -> Proposition {
        if self.assignments().iter().any(|a| self.modes[a.vr].kind.is_uav()) {
            Proposition::Second
        } else {
            Proposition::First
        }
    }

    /// Stacked barrier `h_j = sum of h_j(x_i)` over robots assigned to `j`.
    pub fn stacked_h(&self) -> DVector<f64> {
        let mut h = DVector::zeros(self.tasks.len());
        for a in self.assignments() {
            h[a.task] += task_h(&self.tasks[a.task], &self.states[a.robot].x).0;
        }
        h
    }

    /// `V = h' h`.
    pub fn lyapunov(&self) -> f64 {
        self.stacked_h().norm_squared()
    }

    pub fn first_block(&self, which: Proposition) -> DVector<f64> {
        let h = self.stacked_h();
        match which {
            Proposition::First => {
                DVector::from_iterator(h.len(), h.iter().zip(self.tasks).map(|(h, t)| t.gamma1.eval(*h)))
            }
            Proposition::Second => h,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateMatrices {
    pub layout: PhiLayout,
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub b3: DMatrix<f64>,
    pub b0_prime: DMatrix<f64>,
    pub forms: QuadraticForms,
    pub scalars: CertificateScalars,
    /// `gamma1(h)` and `h` at the assembly state.
    pub gamma_h: DVector<f64>,
    pub h: DVector<f64>,
}

impl CertificateMatrices {
    /// `phi` from an allocator primal vector `[u | delta | alpha]`.
    pub fn phi(&self, which: Proposition, primal: &DVector<f64>) -> Result<DVector<f64>, ConvergenceError> {
        let l = &self.layout;
        let n_rest = l.size(1) + l.size(2) + l.size(3);
        if primal.len() != n_rest {
            return Err(ConvergenceError::Inputs(format!(
                "primal: expected {n_rest}, got {}",
                primal.len()
            )));
        }
        let mut phi = DVector::zeros(l.dim());
        let first = match which {
            Proposition::First => &self.gamma_h,
            Proposition::Second => &self.h,
        };
        phi.rows_mut(0, l.size(0)).copy_from(first);
        phi.rows_mut(l.offset(1), n_rest).copy_from(primal);
        phi[l.offset(4)] = 1.0;
        Ok(phi)
    }

    pub fn lhs(&self, which: Proposition) -> &DMatrix<f64> {
        match which {
            Proposition::First => &self.b0,
            Proposition::Second => &self.b0_prime,
        }
    }

    /// `tau1 B1 + tau2 B2 + tau3 B3 - B0` (or `B0'`).
    pub fn slack_matrix(&self, which: Proposition, tau: [f64; 3]) -> DMatrix<f64> {
        &self.b1 * tau[0] + &self.b2 * tau[1] + &self.b3 * tau[2] - self.lhs(which)
    }
}

/// Upper-triangular block writer; the lower part is mirrored on `finish`.
struct BlockBuilder {
    layout: PhiLayout,
    m: DMatrix<f64>,
}

impl BlockBuilder {
    fn new(layout: PhiLayout) -> Self {
        let n = layout.dim();
        Self {
            layout,
            m: DMatrix::zeros(n, n),
        }
    }

    fn set(&mut self, name: &'static str, bi: usize, bj: usize, x: &DMatrix<f64>) -> Result<(), ConvergenceError> {
        debug_assert!(bi <= bj);
        let expected = (self.layout.size(bi), self.layout.size(bj));
        if x.shape() != expected {
            return Err(ConvergenceError::BlockDimension {
                block: name,
                expected,
                got: x.shape(),
            });
        }
        let (r0, c0) = (self.layout.offset(bi), self.layout.offset(bj));
        self.m.view_mut((r0, c0), expected).copy_from(x);
        if bi != bj {
            self.m
                .view_mut((c0, r0), (expected.1, expected.0))
                .copy_from(&x.transpose());
        }
        Ok(())
    }

    fn finish(self) -> DMatrix<f64> {
        let m = self.m;
        // diagonal blocks are symmetric in exact arithmetic; make it bitwise
        DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| 0.5 * (m[(r, c)] + m[(c, r)]))
    }
}

fn column(v: DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_column_slice(n, 1, v.as_slice())
}

/// Assembles `B0`, `B1`, `B2`, `B3` and `B0'` at the given closed-loop state.
pub fn assemble_certificate_matrices(
    inp: &CertificateInputs<'_>,
    layout: PhiLayout,
    scalars: CertificateScalars,
) -> Result<CertificateMatrices, ConvergenceError> {
    inp.check()?;
    for (name, v) in [("c", scalars.c), ("c1", scalars.c1), ("c2", scalars.c2)] {
        if !(v > 0.0) {
            return Err(ConvergenceError::Scalar(name));
        }
    }
    let p = inp.problem;
    let l = &p.layout;
    let n_t = l.n_t;
    let n_u = l.n_u;
    let n_pairs = l.n_pairs();
    let assignments = inp.assignments();
    let h = inp.stacked_h();
    let gamma_h = inp.first_block(Proposition::First);
    let forms = quadratic_constraint_forms(p);

    // B0
    let mut b0 = BlockBuilder::new(layout);
    b0.set("B0(1,1)", 0, 0, &(DMatrix::identity(n_t, n_t) * scalars.c))?;
    let mut b0_12 = DMatrix::zeros(n_t, n_u);
    let mut b0_15 = DVector::zeros(n_t);
    for a in &assignments {
        let task = &inp.tasks[a.task];
        let state = &inp.states[a.robot];
        let mode = inp.modes[a.vr];
        let (hv, grad) = task_h(task, &state.x);
        let slope = task.gamma1.derivative(hv);
        let g = mode.position_input_matrix();
        let ur = l.u(a.vr);
        for (k, col) in ur.clone().enumerate() {
            b0_12[(a.task, col)] += slope * grad.dot(&g.column(k));
        }
        b0_15[a.task] += slope * grad.dot(&mode.position_drift(state));
    }
    b0.set("B0(1,2)", 0, 1, &b0_12)?;
    b0.set("B0(1,5)", 0, 4, &column(b0_15))?;

    // B1
    let mut b1 = BlockBuilder::new(layout);
    let mut e = DMatrix::zeros(n_t, n_pairs);
    let mut lg = DMatrix::zeros(n_u, n_pairs);
    let mut lf = DVector::zeros(n_pairs);
    for row in &p.cbf_rows {
        let q = l.pair(row.slack.vr, row.slack.task);
        e[(row.slack.task, q)] = 1.0;
        for (k, col) in l.u(row.slack.vr).enumerate() {
            lg[(col, q)] = row.a[k];
        }
        lf[q] = -row.b - gamma_h[row.slack.task];
    }
    b1.set("B1(1,3)", 0, 2, &(e * -0.5))?;
    b1.set("B1(2,3)", 1, 2, &(lg * -0.5))?;
    b1.set("B1(3,3)", 2, 2, &-DMatrix::identity(n_pairs, n_pairs))?;
    b1.set("B1(3,5)", 2, 4, &column(lf * -0.5))?;

    // B2
    let n_prio: usize = p.prioritization.iter().map(|r| r.len()).sum();
    let mut theta = DMatrix::zeros(n_prio, n_pairs);
    let mut phi_bar = DMatrix::zeros(n_prio, n_pairs);
    let mut psi = DVector::zeros(n_prio);
    let mut r0 = 0;
    for (i, rows) in p.prioritization.iter().enumerate() {
        let cols = l.robot_pairs(i);
        if rows.theta.ncols() != cols.len() {
            return Err(ConvergenceError::Inputs(format!(
                "robot {i}: prioritization covers {} pairs, layout has {}",
                rows.theta.ncols(),
                cols.len()
            )));
        }
        theta
            .view_mut((r0, cols.start), rows.theta.shape())
            .copy_from(&rows.theta);
        phi_bar
            .view_mut((r0, cols.start), rows.phi.shape())
            .copy_from(&rows.phi);
        psi.rows_mut(r0, rows.len()).copy_from(&rows.psi);
        r0 += rows.len();
    }
    let mut b2 = BlockBuilder::new(layout);
    b2.set("B2(3,4)", 2, 3, &(theta.transpose() * &phi_bar * 0.5))?;
    b2.set("B2(4,4)", 3, 3, &(phi_bar.transpose() * &phi_bar))?;
    b2.set("B2(4,5)", 3, 4, &column(phi_bar.transpose() * &psi * -0.5))?;

    // B3
    let mut b3 = BlockBuilder::new(layout);
    b3.set("B3(3,3)", 2, 2, &(forms.a_delta.transpose() * &forms.a_delta))?;
    b3.set(
        "B3(3,5)",
        2,
        4,
        &column(forms.a_delta.transpose() * &forms.b_delta * -0.5),
    )?;
    b3.set("B3(4,4)", 3, 3, &(forms.a_alpha.transpose() * &forms.a_alpha))?;
    b3.set(
        "B3(4,5)",
        3,
        4,
        &column(forms.a_alpha.transpose() * &forms.b_alpha * -0.5),
    )?;

    // B0'
    let (c1, c2) = (scalars.c1, scalars.c2);
    let mut bp = BlockBuilder::new(layout);
    let mut bp_12 = DMatrix::zeros(n_t, n_u);
    let mut bp_15 = DVector::zeros(n_t);
    let mut lie = DVector::zeros(n_t);
    for a in &assignments {
        let mode = inp.modes[a.vr];
        if !mode.kind.is_uav() {
            continue;
        }
        let state = &inp.states[a.robot];
        let t = LieTerms::at(&inp.tasks[a.task], state);
        let g = mode.inner_input_matrix(inp.k_v);
        let dg = g.transpose() * t.dl_deta;
        for (k, col) in l.u(a.vr).enumerate() {
            bp_12[(a.task, col)] -= dg[k];
        }
        bp_15[a.task] -= t.dl_dx.dot(&t.w) + t.dl_deta.dot(&inner_drift(&state.eta, inp.k_v));
        lie[a.task] += t.l;
    }
    bp_15 -= &lie * (c1 + c2);
    bp.set("B0'(1,1)", 0, 0, &(DMatrix::identity(n_t, n_t) * -(c1 * c2)))?;
    bp.set("B0'(1,2)", 0, 1, &bp_12)?;
    bp.set("B0'(1,5)", 0, 4, &column(bp_15))?;
    bp.set(
        "B0'(5,5)",
        4,
        4,
        &DMatrix::from_element(1, 1, -2.0 * lie.norm_squared()),
    )?;

    Ok(CertificateMatrices {
        layout,
        b0: b0.finish(),
        b1: b1.finish(),
        b2: b2.finish(),
        b3: b3.finish(),
        b0_prime: bp.finish(),
        forms,
        scalars,
        gamma_h,
        h,
    })
}

/// `n` logarithmically spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

/// `10^-3 .. 10^3`, 13 points.
pub fn default_tau_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 13)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateReport {
    pub which: Proposition,
    /// Best `tau` on the grid.
    pub tau: [f64; 3],
    /// Smallest eigenvalue of the slack matrix at `tau`.
    pub margin: f64,
    pub feasible: bool,
    pub evaluated: usize,
}

/// Grid search over `tau` in `grid^3` for the largest PSD margin of
/// `tau1 B1 + tau2 B2 + tau3 B3 - B0`. Ties keep the first grid point in
/// `(tau1, tau2, tau3)` lexicographic grid order.
pub fn certificate_search(
    mats: &CertificateMatrices,
    which: Proposition,
    grid: &[f64],
    tol: f64,
) -> Result<CertificateReport, ConvergenceError> {
    if grid.is_empty() {
        return Err(ConvergenceError::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|t| !(**t > 0.0)) {
        return Err(ConvergenceError::NonPositiveGrid(bad));
    }
    let n = grid.len();
    let margins: Vec<f64> = (0..n * n * n)
        .into_par_iter()
        .map(|k| {
            let tau = [grid[k / (n * n)], grid[(k / n) % n], grid[k % n]];
            psd_margin(&mats.slack_matrix(which, tau))
        })
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    for (k, m) in margins.iter().enumerate() {
        if *m > margins[best] {
            best = k;
        }
    }
    let margin = margins[best];
    Ok(CertificateReport {
        which,
        tau: [grid[best / (n * n)], grid[(best / n) % n], grid[best % n]],
        margin,
        feasible: margin >= -tol,
        evaluated: margins.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mats_from(b0: DMatrix<f64>, b: DMatrix<f64>) -> CertificateMatrices {
        let n = b0.nrows();
        CertificateMatrices {
            layout: PhiLayout::new(1, 1, n - 3, 1).unwrap(),
            b0: b0.clone(),
            b1: b.clone(),
            b2: b.clone(),
            b3: b,
            b0_prime: b0,
            forms: QuadraticForms {
                a_alpha: DMatrix::zeros(0, 1),
                b_alpha: DVector::zeros(0),
                a_delta: DMatrix::zeros(0, 1),
                b_delta: DVector::zeros(0),
            },
            scalars: CertificateScalars::default(),
            gamma_h: DVector::zeros(1),
            h: DVector::zeros(1),
        }
    }

    #[test]
    fn layout_offsets() {
        let l = PhiLayout::new(2, 4, 6, 6).unwrap();
        assert_eq!(l.block(0), 0..2);
        assert_eq!(l.block(1), 2..6);
        assert_eq!(l.block(3), 12..18);
        assert_eq!(l.block(4), 18..19);
        assert_eq!(l.dim(), 19);
        assert!(matches!(
            PhiLayout::new(2, 0, 1, 1),
            Err(ConvergenceError::EmptyBlock("u"))
        ));
    }

    #[test]
    fn zero_lhs_is_feasible_everywhere() {
        let m = mats_from(DMatrix::zeros(4, 4), DMatrix::identity(4, 4));
        let r = certificate_search(&m, Proposition::First, &[0.5, 2.0], 1e-9).unwrap();
        assert!(r.feasible);
        assert_eq!(r.tau, [2.0, 2.0, 2.0]);
        assert!((r.margin - 6.0).abs() < 1e-12);
        assert_eq!(r.evaluated, 8);
    }

    #[test]
    fn feasible_only_when_tau_sum_reaches_two() {
        let m = mats_from(DMatrix::identity(4, 4) * 2.0, DMatrix::identity(4, 4));
        let grid = [0.1, 1.0];
        for a in grid {
            for b in grid {
                for c in grid {
                    let margin = psd_margin(&m.slack_matrix(Proposition::First, [a, b, c])).unwrap();
                    assert_eq!(margin >= -1e-12, a + b + c >= 2.0 - 1e-12);
                    assert!((margin - (a + b + c - 2.0)).abs() < 1e-12);
                }
            }
        }
        let r = certificate_search(&m, Proposition::First, &grid, 1e-12).unwrap();
        assert!(r.feasible);
        assert_eq!(r.tau, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn grid_errors() {
        let m = mats_from(DMatrix::zeros(4, 4), DMatrix::identity(4, 4));
        assert_eq!(
            certificate_search(&m, Proposition::First, &[], 0.0),
            Err(ConvergenceError::EmptyGrid)
        );
        assert_eq!(
            certificate_search(&m, Proposition::First, &[1.0, 0.0], 0.0),
            Err(ConvergenceError::NonPositiveGrid(0.0))
        );
    }

    #[test]
    fn default_grid_spans_six_decades() {
        let g = default_tau_grid();
        assert_eq!(g.len(), 13);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[6] - 1.0).abs() < 1e-12);
        assert!((g[12] - 1e3).abs() < 1e-9);
    }
}
