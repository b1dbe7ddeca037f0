//! Control barrier function rows for task execution.
//!
//! A position task `j` with target `p_j` is encoded by
//! `h_j(x) = -|x - p_j|^2`, which is maximal (zero) exactly at the target.
//! Each row returned here is a linear inequality `a' u >= b - delta` in the
//! input of one virtual robot, relaxed by the slack `delta` of one
//! (virtual robot, task) pair.
//!
//! Kinematic robots, whose input reaches the position directly, use
//! `L_f h + L_g h u >= -gamma(h) - delta`.
//!
//! For the UAV the input only reaches the position through the inner state,
//! so `L_g h` vanishes. The row is then built on the second barrier
//!
//! ```text
//! h'(x, eta) = dh/dx f(eta) + gamma1(h)
//! ```
//!
//! and asks for `d/dt h' + gamma2(h') >= -delta`.

use nalgebra::{DMatrix, Matrix2, Vector2, Vector3};
use thiserror::Error;

use crate::dynamics::{inner_drift, rotation, ModeSpec, UavState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("L_g h is identically zero for this mode; use high_rel_degree_row")]
    HighRelativeDegree,
    #[error("input matrix must have 2 rows, got {0}")]
    InputShape(usize),
}

/// Linear class-K function `gamma(h) = slope * h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassK {
    pub slope: f64,
}

impl ClassK {
    pub fn linear(slope: f64) -> Self {
        Self { slope }
    }

    pub fn eval(&self, h: f64) -> f64 {
        self.slope * h
    }

    pub fn derivative(&self, _h: f64) -> f64 {
        self.slope
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: String,
    pub target: Vector2<f64>,
    /// Used for kinematic rows and as the inner function of the second barrier.
    pub gamma1: ClassK,
    pub gamma2: ClassK,
    pub n_min: usize,
    pub n_max: usize,
}

impl TaskSpec {
    pub fn reach(id: impl Into<String>, target: [f64; 2]) -> Self {
        Self {
            id: id.into(),
            target: Vector2::from(target),
            gamma1: ClassK::linear(5.0),
            gamma2: ClassK::linear(1.0),
            n_min: 1,
            n_max: 1,
        }
    }
}

/// Which slack variable relaxes a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlackIndex {
    pub vr: usize,
    pub task: usize,
}

/// `a' u >= b - delta[slack]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbfRow {
    pub slack: SlackIndex,
    pub a: Vec<f64>,
    pub b: f64,
}

impl CbfRow {
    /// `a' u - b`; the row holds with zero slack iff this is non-negative.
    pub fn lhs(&self, u: &[f64]) -> f64 {
        self.a.iter().zip(u).map(|(a, u)| a * u).sum::<f64>() - self.b
    }
}

/// `h = -|x - p|^2` and its gradient `-2 (x - p)`.
pub fn task_h(task: &TaskSpec, x: &Vector2<f64>) -> (f64, Vector2<f64>) {
    let e = x - task.target;
    (-e.norm_squared(), -2.0 * e)
}

/// Row for a relative-degree-one pair: `a = (grad h' G)'`,
/// `b = -gamma(h) - grad h' f`.
///
/// `g` is the position-level input matrix. When it is zero the input can
/// never appear in `dh/dt` and the caller needs [`high_rel_degree_row`].
pub fn kinematic_row(
    slack: SlackIndex,
    h: f64,
    grad_h: &Vector2<f64>,
    f: &Vector2<f64>,
    g: &DMatrix<f64>,
    gamma: ClassK,
) -> Result<CbfRow, CbfError> {
    if g.nrows() != 2 {
        return Err(CbfError::InputShape(g.nrows()));
    }
    if g.iter().all(|v| *v == 0.0) {
        return Err(CbfError::HighRelativeDegree);
    }
    let a = (0..g.ncols())
        .map(|c| grad_h[0] * g[(0, c)] + grad_h[1] * g[(1, c)])
        .collect();
    Ok(CbfRow {
        slack,
        a,
        b: -gamma.eval(h) - grad_h.dot(f),
    })
}

/// Derivatives of `L(x, eta) = dh/dx f(eta) = -2 (x - p)' R(theta) v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LieTerms {
    pub h: f64,
    pub grad_h: Vector2<f64>,
    /// World-frame velocity `f(eta)`.
    pub w: Vector2<f64>,
    pub l: f64,
    pub dl_dx: Vector2<f64>,
    pub dl_deta: Vector3<f64>,
}

impl LieTerms {
    pub fn at(task: &TaskSpec, state: &UavState) -> Self {
        let (h, grad_h) = task_h(task, &state.x);
        let r = rotation(state.heading());
        let v = state.velocity();
        let w = r * v;
        // dR/dtheta = R J with J the quarter-turn generator
        let rj = r * Matrix2::new(0.0, -1.0, 1.0, 0.0);
        let d_vx = grad_h.dot(&r.column(0));
        let d_vy = grad_h.dot(&r.column(1));
        let d_theta = grad_h.dot(&(rj * v));
        Self {
            h,
            grad_h,
            w,
            l: grad_h.dot(&w),
            dl_dx: -2.0 * w,
            dl_deta: Vector3::new(d_vx, d_vy, d_theta),
        }
    }

    /// Time derivative of `L` along `eta' = psi(eta) + eta_rate`.
    pub fn l_dot(&self, eta_dot: &Vector3<f64>) -> f64 {
        self.dl_dx.dot(&self.w) + self.dl_deta.dot(eta_dot)
    }
}

/// Value and partial derivatives of the second barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HPrime {
    pub value: f64,
    pub d_dx: Vector2<f64>,
    pub d_deta: Vector3<f64>,
}

pub fn integral_h_prime(task: &TaskSpec, state: &UavState) -> HPrime {
    let t = LieTerms::at(task, state);
    let c1 = task.gamma1.derivative(t.h);
    HPrime {
        value: t.l + task.gamma1.eval(t.h),
        d_dx: t.dl_dx + c1 * t.grad_h,
        d_deta: t.dl_deta,
    }
}

/// Row enforcing `d/dt h' + gamma2(h') >= -delta` for a UAV mode.
///
/// Expanded, the left-hand side is
/// `dL/dx f + dL/deta (psi + g u) + gamma1'(h) L + gamma2(h')`, so
/// `a = (dL/deta g)'` and `b` collects everything that does not multiply `u`.
/// Kinematic modes have no inner input and get `a = 0`.
pub fn high_rel_degree_row(slack: SlackIndex, task: &TaskSpec, state: &UavState, mode: &ModeSpec, k_v: f64) -> CbfRow {
    let t = LieTerms::at(task, state);
    let g = mode.inner_input_matrix(k_v);
    let a = (g.transpose() * t.dl_deta).iter().copied().collect();
    let h_prime = t.l + task.gamma1.eval(t.h);
    let drift = t.l_dot(&inner_drift(&state.eta, k_v)) + task.gamma1.derivative(t.h) * t.l + task.gamma2.eval(h_prime);
    CbfRow { slack, a, b: -drift }
}
