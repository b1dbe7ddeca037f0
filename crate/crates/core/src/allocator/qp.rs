//! Dense primal active-set solver for convex quadratic programs
//!
//! ```text
//!     minimize     1/2 x' H x + g' x + c
//!     subject to   A x >= b
//! ```
//!
//! `H` only needs to be positive semidefinite. Zero-curvature directions of
//! the working face are followed as rays until a constraint blocks them, so
//! variables that appear only in constraints (slacks of infeasible
//! assignments, relaxed binaries without penalty) are handled exactly.
//!
//! A feasible start comes from a phase-one linear program
//! `min t  s.t.  A x + t >= b, t >= 0`, solved by the same iteration.
//! Rows are normalized to unit length internally. Multipliers are reported
//! for the caller's (unnormalized) rows.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("infeasible: smallest achievable violation {violation:.3e}")]
    Infeasible { violation: f64 },
    #[error("objective unbounded below")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub constant: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x) + self.constant
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.n();
        if self.h.shape() != (n, n) {
            return Err(QpError::Dimension(format!(
                "H is {:?}, expected {n}x{n}",
                self.h.shape()
            )));
        }
        if self.a.shape() != (self.m(), n) {
            return Err(QpError::Dimension(format!(
                "A is {:?}, expected {}x{n}",
                self.a.shape(),
                self.m()
            )));
        }
        Ok(())
    }
}

/// Infinity-norm KKT residuals on unit-normalized rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per row of `A`, non-negative at optimality.
    pub lambda: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt: KktResiduals,
}

/// Rows normalized to unit length; zero rows are dropped.
struct Rows {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// original row index and its norm
    origin: Vec<(usize, f64)>,
}

const FEAS_TOL: f64 = 1e-9;
const ZERO_ROW: f64 = 1e-300;
const DEP_TOL: f64 = 1e-13;

fn normalize(p: &QpProblem) -> Result<Rows, QpError> {
    let n = p.n();
    let mut kept = Vec::new();
    for i in 0..p.m() {
        let norm = p.a.row(i).norm();
        if norm <= ZERO_ROW {
            if p.b[i] > FEAS_TOL {
                return Err(QpError::Infeasible { violation: p.b[i] });
            }
            continue;
        }
        kept.push((i, norm));
    }
    let mut a = DMatrix::zeros(kept.len(), n);
    let mut b = DVector::zeros(kept.len());
    for (r, &(i, norm)) in kept.iter().enumerate() {
        a.row_mut(r).copy_from(&(p.a.row(i) / norm));
        b[r] = p.b[i] / norm;
    }
    Ok(Rows { a, b, origin: kept })
}

/// Orthonormal basis of the span of `rows` (Gram-Schmidt, two passes).
/// Returns `None` for a row that is (numerically) dependent.
fn orthonormal_residual(basis: &[DVector<f64>], v: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&r);
            r.axpy(-c, q, 1.0);
        }
    }
    let norm = r.norm();
    (norm > tol * v.norm().max(1e-300)).then(|| r / norm)
}

fn row_basis(a: &DMatrix<f64>, working: &[usize]) -> Vec<DVector<f64>> {
    let mut basis = Vec::with_capacity(working.len());
    for &i in working {
        if let Some(q) = orthonormal_residual(&basis, &a.row(i).transpose(), DEP_TOL) {
            basis.push(q);
        }
    }
    basis
}

fn null_space(n: usize, row_basis: &[DVector<f64>]) -> DMatrix<f64> {
    let r = n.saturating_sub(row_basis.len());
    let mut basis: Vec<DVector<f64>> = row_basis.to_vec();
    let mut z = Vec::with_capacity(r);
    for k in 0..n {
        if z.len() == r {
            break;
        }
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let mut res = e.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&res);
                res.axpy(-c, q, 1.0);
            }
        }
        let norm = res.norm();
        if norm > 1e-6 {
            let q = res / norm;
            basis.push(q.clone());
            z.push(q);
        }
    }
    if z.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&z)
}

fn multipliers(a: &DMatrix<f64>, working: &[usize], grad: &DVector<f64>) -> DVector<f64> {
    let w = working.len();
    if w == 0 {
        return DVector::zeros(0);
    }
    let awt = DMatrix::from_fn(a.ncols(), w, |r, c| a[(working[c], r)]);
    let qr = awt.clone().qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if r.diagonal().iter().all(|d| d.abs() > 1e-14 * rmax) {
        if let Some(l) = r.solve_upper_triangular(&(qr.q().transpose() * grad)) {
            return l;
        }
    }
    awt.svd(true, true)
        .solve(grad, 1e-15)
        .unwrap_or_else(|_| DVector::zeros(w))
}

struct Outcome {
    x: DVector<f64>,
    working: Vec<usize>,
    lambda_w: DVector<f64>,
    iterations: usize,
}

/// Primal active-set iteration from a feasible `x` with an independent working set.
fn active_set(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    rows: &Rows,
    mut x: DVector<f64>,
    mut working: Vec<usize>,
    max_iter: usize,
) -> Result<Outcome, QpError> {
    let n = g.len();
    let m = rows.b.len();
    let h_abs_max = h.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut in_working = vec![false; m];
    for &i in &working {
        in_working[i] = true;
    }
    let mut degenerate_run = 0usize;
    // rows whose negative multiplier proved to be round-off at the current point
    let mut pinned = vec![false; m];
    let mut last_dropped: Option<usize> = None;
    // reduced-gradient norm before the last unblocked Newton step
    let mut newton_gr: Option<f64> = None;
    // working sets seen since the objective last made real progress
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let objective = |x: &DVector<f64>| 0.5 * x.dot(&(h * x)) + g.dot(x);
    let mut f_ref = objective(&x);
    let mut force_bland = false;

    for iter in 0..max_iter {
        let grad = h * &x + g;
        let scale = 1.0 + (h.abs() * x.abs() + g.abs()).max();
        let basis = row_basis(&rows.a, &working);
        let z = null_space(n, &basis);

        let mut direction: Option<(DVector<f64>, bool, f64)> = None;
        if z.ncols() > 0 {
            let gr = z.transpose() * &grad;
            let stalled = newton_gr.is_some_and(|prev| gr.amax() >= 0.5 * prev);
            if gr.amax() > 1e-15 * scale {
                let hr = z.transpose() * h * &z;
                let eig = SymmetricEigen::new(hr);
                let lam_max = eig.eigenvalues.amax();
                let curv_tol = 1e-11 * lam_max.max(1.0).max(h_abs_max.min(1.0));
                let comps = eig.eigenvectors.transpose() * &gr;
                let mut ray = DVector::zeros(z.ncols());
                let mut newton = DVector::zeros(z.ncols());
                let mut ray_norm2 = 0.0;
                let mut newton_norm2 = 0.0;
                for k in 0..z.ncols() {
                    let vk = eig.eigenvectors.column(k);
                    if eig.eigenvalues[k] <= curv_tol {
                        ray_norm2 += comps[k] * comps[k];
                        ray.axpy(-comps[k], &vk, 1.0);
                    } else {
                        newton_norm2 += comps[k] * comps[k];
                        newton.axpy(-comps[k] / eig.eigenvalues[k], &vk, 1.0);
                    }
                }
                // curved part first; the flat part is followed once it dominates
                let ray_norm = ray_norm2.sqrt();
                let has_ray = ray_norm > 1e-13 * scale && (ray_norm2 > newton_norm2 || stalled);
                let (pr, is_ray) = if has_ray { (ray, true) } else { (newton, false) };
                let p = &z * pr;
                if is_ray || (!stalled && p.amax() > 1e-15 * (1.0 + x.amax())) {
                    direction = Some((p, is_ray, gr.amax()));
                }
            }
        }

        let mut moved = false;
        if let Some((p, is_ray, gr_norm)) = direction {
            let p_norm = p.norm();
            let mut step = if is_ray { f64::INFINITY } else { 1.0 };
            let mut blocking = None;
            for i in 0..m {
                if in_working[i] {
                    continue;
                }
                let ap = rows.a.row(i).dot(&p.transpose());
                if ap < -1e-10 * p_norm {
                    let slack = (rows.a.row(i).dot(&x.transpose()) - rows.b[i]).max(0.0);
                    let s = slack / -ap;
                    if s < step {
                        step = s;
                        blocking = Some(i);
                    }
                }
            }
            // an unblocked ray from a round-off gradient is a stationary point
            let noise = step.is_infinite() && gr_norm <= 1e-9 * scale;
            if step.is_infinite() && !noise {
                return Err(QpError::Unbounded);
            }
            let dependent =
                blocking.is_some_and(|i| orthonormal_residual(&basis, &rows.a.row(i).transpose(), DEP_TOL).is_none());
            // a dependent blocker means p is round-off inside the working span
            if !noise && !(dependent && step * p_norm <= 1e-12 * (1.0 + x.amax())) {
                x.axpy(step, &p, 1.0);
                if step * p_norm <= 1e-14 * (1.0 + x.amax()) {
                    degenerate_run += 1;
                    if let Some(b) = blocking.filter(|_| blocking == last_dropped) {
                        pinned[b] = true;
                    }
                } else {
                    degenerate_run = 0;
                    pinned.iter_mut().for_each(|p| *p = false);
                }
                last_dropped = None;
                newton_gr = (blocking.is_none() && !is_ray).then_some(gr_norm);
                if let Some(i) = blocking {
                    if !dependent {
                        working.push(i);
                        in_working[i] = true;
                    }
                }
                moved = true;
            }
        }
        if moved {
            continue;
        }
        let lambda = multipliers(&rows.a, &working, &grad);
        let tol = 1e-12 * scale;
        let mut bland = force_bland || degenerate_run > 3 * (n + m);
        let f = objective(&x);
        if f < f_ref - 1e-12 * (1.0 + f.abs()) {
            f_ref = f;
            seen.clear();
        }
        let mut key = working.clone();
        key.sort_unstable();
        let mut cycling = !seen.insert(key);
        if cycling && !force_bland {
            force_bland = true;
            bland = true;
            cycling = false;
            seen.clear();
        }
        let mut drop: Option<(usize, f64)> = None;
        for (pos, &l) in lambda.iter().enumerate() {
            if l < -tol && !pinned[working[pos]] {
                let better = match drop {
                    None => true,
                    Some((q, lq)) => {
                        if bland {
                            working[pos] < working[q]
                        } else {
                            l < lq
                        }
                    }
                };
                if better {
                    drop = Some((pos, l));
                }
            }
        }
        match drop.filter(|_| !cycling) {
            None => {
                return Ok(Outcome {
                    x,
                    working,
                    lambda_w: lambda,
                    iterations: iter,
                })
            }
            Some((pos, _)) => {
                let i = working.remove(pos);
                in_working[i] = false;
                last_dropped = Some(i);
                newton_gr = None;
            }
        }
    }
    Err(QpError::IterationLimit(max_iter))
}

fn initial_working(rows: &Rows, x: &DVector<f64>, tol: f64) -> Vec<usize> {
    let mut working = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for i in 0..rows.b.len() {
        let slack = rows.a.row(i).dot(&x.transpose()) - rows.b[i];
        if slack.abs() <= tol {
            if let Some(q) = orthonormal_residual(&basis, &rows.a.row(i).transpose(), 1e-9) {
                basis.push(q);
                working.push(i);
            }
        }
    }
    working
}

fn max_violation(rows: &Rows, x: &DVector<f64>) -> f64 {
    (&rows.b - &rows.a * x).iter().fold(0.0f64, |acc, v| acc.max(*v))
}

/// Finds a point with `A x >= b`, starting from `x0`.
fn phase_one(rows: &Rows, x0: DVector<f64>, max_iter: usize) -> Result<DVector<f64>, QpError> {
    let viol = max_violation(rows, &x0);
    if viol <= FEAS_TOL * 1e-2 {
        return Ok(x0);
    }
    let n = x0.len();
    let m = rows.b.len();
    // variables (x, t); rows: A x + t >= b, t >= 0
    let mut a = DMatrix::zeros(m + 1, n + 1);
    a.view_mut((0, 0), (m, n)).copy_from(&rows.a);
    let mut b = DVector::zeros(m + 1);
    b.rows_mut(0, m).copy_from(&rows.b);
    let mut origin = Vec::with_capacity(m + 1);
    for i in 0..m {
        let norm = (1.0f64 + 1.0).sqrt();
        a.row_mut(i).scale_mut(1.0 / norm);
        a[(i, n)] = 1.0 / norm;
        b[i] /= norm;
        origin.push((i, norm));
    }
    a[(m, n)] = 1.0;
    origin.push((m, 1.0));
    let lp = Rows { a, b, origin };
    let mut y = DVector::zeros(n + 1);
    y.rows_mut(0, n).copy_from(&x0);
    y[n] = viol;
    let mut cost = DVector::zeros(n + 1);
    cost[n] = 1.0;
    let working = initial_working(&lp, &y, 1e-12 * (1.0 + viol));
    let out = active_set(&DMatrix::zeros(n + 1, n + 1), &cost, &lp, y, working, max_iter)?;
    let t = out.x[n];
    if t > FEAS_TOL {
        return Err(QpError::Infeasible { violation: t });
    }
    Ok(out.x.rows(0, n).into_owned())
}

/// KKT residuals of `(x, lambda)` with rows scaled to unit norm.
pub fn kkt_residuals(p: &QpProblem, x: &DVector<f64>, lambda: &DVector<f64>) -> KktResiduals {
    let grad = &p.h * x + &p.g;
    let mut stat = grad;
    let mut res = KktResiduals::default();
    for i in 0..p.m() {
        let norm = p.a.row(i).norm();
        if norm <= ZERO_ROW {
            continue;
        }
        let ln = lambda[i] * norm;
        let slack = (p.a.row(i).dot(&x.transpose()) - p.b[i]) / norm;
        stat.axpy(-lambda[i], &p.a.row(i).transpose(), 1.0);
        res.primal = res.primal.max(-slack);
        res.dual = res.dual.max(-ln);
        res.complementarity = res.complementarity.max((ln * slack).abs());
    }
    res.stationarity = stat.amax();
    res
}

/// Solves the QP, optionally starting phase one from `hint`.
pub fn solve(p: &QpProblem, hint: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
    p.check()?;
    let n = p.n();
    let rows = normalize(p)?;
    let max_iter = 50 * (n + rows.b.len()) + 200;
    let x0 = match hint {
        Some(h) if h.len() == n => h.clone(),
        _ => DVector::zeros(n),
    };
    let x = phase_one(&rows, x0, max_iter)?;
    let mut working = initial_working(&rows, &x, 1e-12);
    let mut start = x;
    let mut best: Option<(DVector<f64>, DVector<f64>, usize, KktResiduals)> = None;
    let mut last_err = None;
    for _ in 0..3 {
        let out = match active_set(&p.h, &p.g, &rows, start.clone(), working.clone(), max_iter) {
            Ok(out) => out,
            Err(e) => {
                last_err = Some(e);
                break;
            }
        };
        let mut candidates = vec![(out.x.clone(), out.lambda_w.clone())];
        if let Some(polished) = polish(&p.h, &p.g, &rows, &out) {
            candidates.push(polished);
        }
        for (x, lambda_w) in candidates {
            let lambda = lift_multipliers(p, &rows, &out.working, &lambda_w);
            let kkt = kkt_residuals(p, &x, &lambda);
            if best.as_ref().is_none_or(|b| kkt.max() < b.3.max()) {
                best = Some((x, lambda, out.iterations, kkt));
            }
        }
        let (bx, _, _, bk) = best.as_ref().unwrap();
        if bk.max() <= 1e-9 {
            break;
        }
        // restart from the best point with a fresh working set
        start = bx.clone();
        working = initial_working(&rows, &start, 1e-10);
    }
    let Some((x, lambda, iterations, kkt)) = best else {
        return Err(last_err.unwrap_or(QpError::IterationLimit(max_iter)));
    };
    Ok(QpSolution {
        objective: p.objective(&x),
        x,
        lambda,
        iterations,
        kkt,
    })
}

fn lift_multipliers(p: &QpProblem, rows: &Rows, working: &[usize], lambda_w: &DVector<f64>) -> DVector<f64> {
    let mut lambda = DVector::zeros(p.m());
    for (pos, &i) in working.iter().enumerate() {
        let (orig, norm) = rows.origin[i];
        lambda[orig] = lambda_w[pos].max(0.0) / norm;
    }
    lambda
}

/// One least-squares Newton correction of the working-face KKT system.
fn polish(h: &DMatrix<f64>, g: &DVector<f64>, rows: &Rows, out: &Outcome) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = g.len();
    let w = out.working.len();
    let mut k = DMatrix::zeros(n + w, n + w);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    let mut rhs = DVector::zeros(n + w);
    rhs.rows_mut(0, n).copy_from(&-(h * &out.x + g));
    for (pos, &i) in out.working.iter().enumerate() {
        for c in 0..n {
            k[(c, n + pos)] = -rows.a[(i, c)];
            k[(n + pos, c)] = rows.a[(i, c)];
        }
        rhs[n + pos] = rows.b[i] - rows.a.row(i).dot(&out.x.transpose());
    }
    let d = k.svd(true, true).solve(&rhs, 1e-13).ok()?;
    let x = &out.x + d.rows(0, n);
    if max_violation(rows, &x) > max_violation(rows, &out.x).max(1e-13) {
        return None;
    }
    Some((x, d.rows(n, w).into_owned()))
}
