//! Control-affine robot models.
//!
//! The convertible UAV moves in the plane with position `x` and an inner
//! state `eta = [v_x, v_y, theta]` holding body-frame velocity and heading:
//!
//! ```text
//! x'   = R(theta) [v_x, v_y]
//! eta' = psi(eta) + g_k u,     psi(eta) = [-k_v v_x, -k_v v_y, 0]
//! ```
//!
//! The generic input `[v_x_ref, v_y_ref, omega]` enters through
//! `g = diag(k_v, k_v, 1)`. Cruise keeps columns {0, 2} (forward velocity
//! and yaw rate), hover keeps columns {0, 1} (planar velocity). The inner
//! state is shared by all modes, so switching modes never resets it.
//!
//! `Velocity` modes model a kinematic robot (`x' = u`) whose inner state
//! stays frozen.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3x2, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("mode `{mode}` expects {expected} inputs, got {got}")]
    InputDimension { mode: String, expected: usize, got: usize },
    #[error("mode `{mode}`: energy weights must be finite and non-negative")]
    NegativeWeight { mode: String },
    #[error("mode `{mode}`: energy parameters must have length {expected}")]
    EnergyDimension { mode: String, expected: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("non-finite derivative at state {state:?}")]
pub struct IntegrationError {
    pub state: Vec<f64>,
}

/// Planar position plus `[v_x, v_y, theta]`. Heading is never wrapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub x: Vector2<f64>,
    pub eta: Vector3<f64>,
}

impl UavState {
    pub fn new(x: [f64; 2], eta: [f64; 3]) -> Self {
        Self {
            x: Vector2::from(x),
            eta: Vector3::from(eta),
        }
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.eta[0], self.eta[1])
    }

    pub fn heading(&self) -> f64 {
        self.eta[2]
    }

    /// World-frame velocity `f(eta) = R(theta) v`.
    pub fn world_velocity(&self) -> Vector2<f64> {
        rotation(self.heading()) * self.velocity()
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.x[0], self.x[1], self.eta[0], self.eta[1], self.eta[2]]
    }

    pub fn from_array(a: &[f64; 5]) -> Self {
        Self::new([a[0], a[1]], [a[2], a[3], a[4]])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeKind {
    Cruise,
    Hover,
    Velocity,
}

impl ModeKind {
    pub fn input_dim(self) -> usize {
        2
    }

    /// Columns of the generic `g` kept by UAV modes; `None` for kinematic modes.
    pub fn g_columns(self) -> Option<[usize; 2]> {
        match self {
            ModeKind::Cruise => Some([0, 2]),
            ModeKind::Hover => Some([0, 1]),
            ModeKind::Velocity => None,
        }
    }

    pub fn is_uav(self) -> bool {
        self.g_columns().is_some()
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cruise" => Some(ModeKind::Cruise),
            "hover" | "hovering" => Some(ModeKind::Hover),
            "velocity" => Some(ModeKind::Velocity),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::Cruise => "cruise",
            ModeKind::Hover => "hover",
            ModeKind::Velocity => "velocity",
        }
    }
}

/// `eps(u) = sum_i w_i (u_i - u_eff_i)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyParams {
    pub weights: Vec<f64>,
    pub u_eff: Vec<f64>,
}

/// `eps(u) = u' Q u + c' u + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        (u.transpose() * &self.q * u)[(0, 0)] + self.c.dot(u) + self.constant
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    pub id: String,
    pub kind: ModeKind,
    pub energy: EnergyParams,
}

impl ModeSpec {
    /// Builds a mode, checking the energy parameters.
    pub fn new(id: impl Into<String>, kind: ModeKind, energy: EnergyParams) -> Result<Self, DynamicsError> {
        let mode = Self {
            id: id.into(),
            kind,
            energy,
        };
        mode.check_energy()?;
        Ok(mode)
    }

    /// Cruise mode with unit weights and efficient forward speed `v_x_eff`.
    pub fn cruise(v_x_eff: f64) -> Self {
        Self {
            id: "cruise".into(),
            kind: ModeKind::Cruise,
            energy: EnergyParams {
                weights: vec![1.0, 1.0],
                u_eff: vec![v_x_eff, 0.0],
            },
        }
    }

    /// Hover mode: energy is the squared velocity reference.
    pub fn hover() -> Self {
        Self {
            id: "hover".into(),
            kind: ModeKind::Hover,
            energy: EnergyParams {
                weights: vec![1.0, 1.0],
                u_eff: vec![0.0, 0.0],
            },
        }
    }

    pub fn velocity(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: ModeKind::Velocity,
            energy: EnergyParams {
                weights: vec![1.0, 1.0],
                u_eff: vec![0.0, 0.0],
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        self.kind.input_dim()
    }

    fn check_energy(&self) -> Result<(), DynamicsError> {
        let n = self.input_dim();
        if self.energy.weights.len() != n || self.energy.u_eff.len() != n {
            return Err(DynamicsError::EnergyDimension {
                mode: self.id.clone(),
                expected: n,
            });
        }
        if self.energy.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DynamicsError::NegativeWeight { mode: self.id.clone() });
        }
        Ok(())
    }

    fn check_input(&self, u: &[f64]) -> Result<(), DynamicsError> {
        if u.len() != self.input_dim() {
            return Err(DynamicsError::InputDimension {
                mode: self.id.clone(),
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `g_k`, the inner-state input matrix of a UAV mode.
    pub fn inner_input_matrix(&self, k_v: f64) -> Matrix3x2<f64> {
        let g = Vector3::new(k_v, k_v, 1.0);
        let mut out = Matrix3x2::zeros();
        if let Some(cols) = self.kind.g_columns() {
            for (c, &col) in cols.iter().enumerate() {
                out[(col, c)] = g[col];
            }
        }
        out
    }

    /// Position-level drift `f` of `x' = f + G u`.
    pub fn position_drift(&self, state: &UavState) -> Vector2<f64> {
        match self.kind {
            ModeKind::Velocity => Vector2::zeros(),
            _ => state.world_velocity(),
        }
    }

    /// Position-level input matrix `G`. Zero for UAV modes, whose input only
    /// reaches the position through the inner state.
    pub fn position_input_matrix(&self) -> Matrix2<f64> {
        match self.kind {
            ModeKind::Velocity => Matrix2::identity(),
            _ => Matrix2::zeros(),
        }
    }
}

/// `psi(eta) = [-k_v v_x, -k_v v_y, 0]`.
pub fn inner_drift(eta: &Vector3<f64>, k_v: f64) -> Vector3<f64> {
    Vector3::new(-k_v * eta[0], -k_v * eta[1], 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub x: Vector2<f64>,
    pub eta: Vector3<f64>,
}

impl StateDerivative {
    pub fn to_array(&self) -> [f64; 5] {
        [self.x[0], self.x[1], self.eta[0], self.eta[1], self.eta[2]]
    }
}

pub fn derivative(state: &UavState, mode: &ModeSpec, u: &[f64], k_v: f64) -> Result<StateDerivative, DynamicsError> {
    mode.check_input(u)?;
    let u = Vector2::new(u[0], u[1]);
    Ok(match mode.kind {
        ModeKind::Velocity => StateDerivative {
            x: u,
            eta: Vector3::zeros(),
        },
        _ => StateDerivative {
            x: state.world_velocity(),
            eta: inner_drift(&state.eta, k_v) + mode.inner_input_matrix(k_v) * u,
        },
    })
}

/// Derivative of a robot that receives no input: the velocity decays
/// through `psi`, heading holds.
pub fn unforced_derivative(state: &UavState, k_v: f64) -> StateDerivative {
    StateDerivative {
        x: state.world_velocity(),
        eta: inner_drift(&state.eta, k_v),
    }
}

/// Energy cost of `u` in `mode` and the equivalent quadratic form.
pub fn energy_cost(mode: &ModeSpec, u: &[f64]) -> Result<(f64, QuadraticForm), DynamicsError> {
    mode.check_input(u)?;
    mode.check_energy()?;
    let form = energy_form(mode);
    let value = u
        .iter()
        .zip(&mode.energy.u_eff)
        .zip(&mode.energy.weights)
        .map(|((ui, ei), w)| w * (ui - ei).powi(2))
        .sum();
    Ok((value, form))
}

pub fn energy_form(mode: &ModeSpec) -> QuadraticForm {
    let w = DVector::from_column_slice(&mode.energy.weights);
    let e = DVector::from_column_slice(&mode.energy.u_eff);
    let we = w.component_mul(&e);
    QuadraticForm {
        q: DMatrix::from_diagonal(&w),
        c: -2.0 * &we,
        constant: we.dot(&e),
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize, F>(f: F, y: &[f64; N], dt: f64) -> Result<[f64; N], IntegrationError>
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    debug_assert!(dt != 0.0, "dt must be non-zero");
    let eval = |y: &[f64; N]| {
        let d = f(y);
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(IntegrationError { state: y.to_vec() })
        }
    };
    let axpy = |y: &[f64; N], k: &[f64; N], h: f64| {
        let mut out = *y;
        out.iter_mut().zip(k).for_each(|(o, k)| *o += h * k);
        out
    };
    let k1 = eval(y)?;
    let k2 = eval(&axpy(y, &k1, 0.5 * dt))?;
    let k3 = eval(&axpy(y, &k2, 0.5 * dt))?;
    let k4 = eval(&axpy(y, &k3, dt))?;
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

/// Integrates one robot over `dt` with the input held constant.
pub fn step_robot(
    state: &UavState,
    mode: Option<(&ModeSpec, &[f64])>,
    k_v: f64,
    dt: f64,
) -> Result<UavState, IntegrationError> {
    let next = rk4_step(
        |y: &[f64; 5]| {
            let s = UavState::from_array(y);
            match mode {
                Some((m, u)) => derivative(&s, m, u, k_v).map(|d| d.to_array()).unwrap_or([f64::NAN; 5]),
                None => unforced_derivative(&s, k_v).to_array(),
            }
        },
        &state.to_array(),
        dt,
    )?;
    Ok(UavState::from_array(&next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn hover_at_reference_is_equilibrium() {
        let s = UavState::new([0.0, 0.0], [1.0, 0.0, 0.0]);
        let d = derivative(&s, &ModeSpec::hover(), &[1.0, 0.0], 4.0).unwrap();
        assert_relative_eq!(d.x, Vector2::new(1.0, 0.0));
        assert_relative_eq!(d.eta, Vector3::zeros());
    }

    #[test]
    fn quarter_turn_rotates_velocity() {
        let s = UavState::new([0.0, 0.0], [1.0, 0.0, FRAC_PI_2]);
        let d = derivative(&s, &ModeSpec::hover(), &[1.0, 0.0], 4.0).unwrap();
        assert_relative_eq!(d.x, Vector2::new(0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn cruise_input_substitution() {
        let s = UavState::new([0.0, 0.0], [0.0, 0.0, 0.0]);
        let d = derivative(&s, &ModeSpec::cruise(2.0), &[2.0, 0.5], 4.0).unwrap();
        assert_relative_eq!(d.eta, Vector3::new(8.0, 0.0, 0.5));
    }

    #[test]
    fn wrong_input_length() {
        let s = UavState::new([0.0, 0.0], [0.0, 0.0, 0.0]);
        let err = derivative(&s, &ModeSpec::hover(), &[1.0], 4.0).unwrap_err();
        assert!(matches!(
            err,
            DynamicsError::InputDimension {
                expected: 2,
                got: 1,
                ..
            }
        ));
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy_cost(&ModeSpec::cruise(2.0), &[2.0, 0.0]).unwrap().0, 0.0);
        assert_eq!(energy_cost(&ModeSpec::hover(), &[2.0, 0.0]).unwrap().0, 4.0);
        let (v, form) = energy_cost(&ModeSpec::cruise(2.0), &[3.0, 1.0]).unwrap();
        assert_eq!(v, 2.0);
        assert_relative_eq!(form.eval(&DVector::from_vec(vec![3.0, 1.0])), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_weight_rejected() {
        let energy = EnergyParams {
            weights: vec![1.0, -1.0],
            u_eff: vec![0.0, 0.0],
        };
        assert!(matches!(
            ModeSpec::new("bad", ModeKind::Hover, energy),
            Err(DynamicsError::NegativeWeight { .. })
        ));
    }

    #[test]
    fn quadratic_form_agrees_with_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mode = ModeSpec::new(
            "m",
            ModeKind::Cruise,
            EnergyParams {
                weights: vec![0.7, 2.5],
                u_eff: vec![2.0, -0.3],
            },
        )
        .unwrap();
        for _ in 0..100 {
            let u = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let (v, form) = energy_cost(&mode, &u).unwrap();
            assert!((form.eval(&DVector::from_column_slice(&u)) - v).abs() <= 1e-12 * (1.0 + v));
        }
    }

    #[test]
    fn rotation_preserves_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = UavState::new(
                [0.0, 0.0],
                [
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-10.0..10.0),
                ],
            );
            assert_relative_eq!(s.world_velocity().norm(), s.velocity().norm(), epsilon = 1e-12);
        }
    }

    #[test]
    fn velocity_tracks_reference() {
        let k_v: f64 = 4.0;
        let mut s = UavState::new([0.0, 0.0], [0.0, 0.0, 0.3]);
        let u = [1.5, -0.7];
        let dt = 0.01;
        let steps = (5.0 / k_v / dt).round() as usize;
        for _ in 0..steps {
            s = step_robot(&s, Some((&ModeSpec::hover(), &u)), k_v, dt).unwrap();
        }
        let err = (s.velocity() - Vector2::new(u[0], u[1])).norm();
        assert!(err <= 0.01 * Vector2::new(u[0], u[1]).norm(), "{err}");
    }

    #[test]
    fn rk4_zero_and_constant() {
        let y = [1.0, -2.0];
        assert_eq!(rk4_step(|_| [0.0, 0.0], &y, 0.1).unwrap(), y);
        let out = rk4_step(|_| [3.0, 0.5], &y, 0.25).unwrap();
        assert_relative_eq!(out[0], 1.75, epsilon = 1e-15);
        assert_relative_eq!(out[1], -1.875, epsilon = 1e-15);
    }

    #[test]
    fn rk4_exponential_decay() {
        let out = rk4_step(|y: &[f64; 1]| [-y[0]], &[1.0], 0.01).unwrap();
        assert!((out[0] - (-0.01f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn rk4_fourth_order() {
        let err = |dt: f64| {
            let n = (1.0 / dt).round() as usize;
            let mut y = [1.0];
            for _ in 0..n {
                y = rk4_step(|y: &[f64; 1]| [-y[0]], &y, dt).unwrap();
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((14.0..18.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn rk4_reports_non_finite() {
        let err = rk4_step(|_: &[f64; 1]| [f64::NAN], &[2.0], 0.1).unwrap_err();
        assert_eq!(err.state, vec![2.0]);
    }
}
