use multimode_alloc::allocator::{solve_allocation, AllocationSolution, BnbOptions, MiqpProblem};
use multimode_alloc::convergence::{
    assemble_certificate_matrices, asymmetry, certificate_search, jacobi_eigenvalues, log_grid,
    quadratic_constraint_forms, CertificateInputs, CertificateMatrices, CertificateScalars, ConvergenceError,
    PhiLayout, Proposition,
};
use multimode_alloc::dynamics::{step_robot, UavState};
use multimode_alloc::sim::{build_problem, parse_scenario, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_UAVS: &str = r#"
schema_version = 1
name = "two_uavs"
[[robots]]
id = "a"
position = [0.0, 0.0]
modes = [
    { id = "cruise", kind = "cruise", features = ["wing"] },
    { id = "hover", kind = "hover", features = ["rotor"] },
]
[[robots]]
id = "b"
position = [1.0, 0.0]
modes = [
    { id = "cruise", kind = "cruise", features = ["wing"] },
    { id = "hover", kind = "hover", features = ["rotor"] },
]
[[capabilities]]
id = "fly"
features = ["wing", "rotor"]
[[tasks]]
id = "p"
target = [1.0, 2.0]
capabilities = ["fly"]
[[tasks]]
id = "q"
target = [-1.0, 1.5]
capabilities = ["fly"]
"#;

const TWO_WALKERS: &str = r#"
schema_version = 1
name = "two_walkers"
[[robots]]
id = "a"
position = [0.0, 0.0]
modes = [{ id = "walk", kind = "velocity", features = ["legs"] }]
[[robots]]
id = "b"
position = [1.0, 0.0]
modes = [
    { id = "walk", kind = "velocity", features = ["legs"] },
    { id = "roll", kind = "velocity", features = ["wheels"], weights = [0.5, 0.5] },
]
[[capabilities]]
id = "move"
features = ["legs", "wheels"]
[[tasks]]
id = "p"
target = [1.0, 2.0]
capabilities = ["move"]
[[tasks]]
id = "q"
target = [-1.0, 1.5]
capabilities = ["move"]
"#;

fn random_uav_state(rng: &mut ChaCha8Rng) -> UavState {
    UavState::new(
        [rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..3.0)],
        [
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-3.0..3.0),
        ],
    )
}

struct Point {
    scenario: Scenario,
    states: Vec<UavState>,
    problem: MiqpProblem,
    solution: AllocationSolution,
}

impl Point {
    fn new(text: &str, states: Vec<UavState>) -> Self {
        let scenario = parse_scenario(text).unwrap();
        let problem = build_problem(&scenario, &states).unwrap();
        let solution = solve_allocation(&problem, &BnbOptions::default()).unwrap();
        Self {
            scenario,
            states,
            problem,
            solution,
        }
    }

    fn matrices(&self, scalars: CertificateScalars) -> CertificateMatrices {
        let modes = self.scenario.vr_modes();
        let inp = CertificateInputs {
            problem: &self.problem,
            states: &self.states,
            modes: &modes,
            tasks: &self.scenario.tasks,
            alpha: &self.solution.alpha,
            k_v: self.scenario.params.k_v,
        };
        assemble_certificate_matrices(&inp, PhiLayout::for_problem(&self.problem).unwrap(), scalars).unwrap()
    }

    /// Robot states after holding each assigned input for `dt` (negative allowed).
    fn flow(&self, u: &DVector<f64>, dt: f64) -> Vec<UavState> {
        let l = &self.problem.layout;
        let modes = self.scenario.vr_modes();
        let mut next = self.states.clone();
        for i in 0..l.n_robots() {
            let Some(q) = l.robot_pairs(i).find(|&q| self.solution.alpha[q] == 1) else {
                continue;
            };
            let v = q / l.n_t;
            let ui: Vec<f64> = l.u(v).map(|c| u[c]).collect();
            next[i] = step_robot(&self.states[i], Some((modes[v], &ui)), self.scenario.params.k_v, dt).unwrap();
        }
        next
    }

    /// Stacked `h_j` summed over the robots assigned to `j`.
    fn stacked_h(&self, states: &[UavState]) -> DVector<f64> {
        let l = &self.problem.layout;
        let mut h = DVector::zeros(l.n_t);
        for i in 0..l.n_robots() {
            if let Some(q) = l.robot_pairs(i).find(|&q| self.solution.alpha[q] == 1) {
                let j = q % l.n_t;
                let t = &self.scenario.tasks[j];
                h[j] += -(states[i].x - t.target).norm_squared();
            }
        }
        h
    }
}

fn quad(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * m * x)[(0, 0)]
}

fn random_u(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0))
}

fn primal_with_u(sol: &AllocationSolution, u: &DVector<f64>) -> DVector<f64> {
    let mut p = sol.primal.clone();
    p.rows_mut(0, u.len()).copy_from(u);
    p
}

#[test]
fn second_certificate_matches_lyapunov_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let scalars = CertificateScalars {
        c: 1.0,
        c1: 0.7,
        c2: 1.9,
    };
    let eps = 1e-3;
    let mut checked = 0;
    while checked < 20 {
        let point = Point::new(TWO_UAVS, vec![random_uav_state(&mut rng), random_uav_state(&mut rng)]);
        if point.solution.alpha.iter().all(|a| *a == 0) {
            continue;
        }
        let m = point.matrices(scalars);
        let u = random_u(&mut rng, point.problem.layout.n_u);
        let phi = m.phi(Proposition::Second, &primal_with_u(&point.solution, &u)).unwrap();
        let v = |s: &[UavState]| point.stacked_h(s).norm_squared();
        let at = |k: f64| v(&point.flow(&u, k * eps));
        let (p2, p1, v0, m1, m2) = (at(2.0), at(1.0), v(&point.states), at(-1.0), at(-2.0));
        let v_dot = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps);
        let v_ddot = (-p2 + 16.0 * p1 - 30.0 * v0 + 16.0 * m1 - m2) / (12.0 * eps * eps);
        let expected = -v_ddot - (scalars.c1 + scalars.c2) * v_dot - scalars.c1 * scalars.c2 * v0;
        let got = quad(&m.b0_prime, &phi);
        assert!((got - expected).abs() <= 1e-3, "case {checked}: {got} vs {expected}");
        checked += 1;
    }
}

#[test]
fn first_certificate_matches_barrier_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let scalars = CertificateScalars {
        c: 2.5,
        ..Default::default()
    };
    let eps = 1e-4;
    for case in 0..20 {
        let states = (0..2)
            .map(|_| UavState::new([rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..3.0)], [0.0; 3]))
            .collect();
        let point = Point::new(TWO_WALKERS, states);
        let m = point.matrices(scalars);
        let u = random_u(&mut rng, point.problem.layout.n_u);
        let phi = m.phi(Proposition::First, &primal_with_u(&point.solution, &u)).unwrap();
        let gamma = |s: &[UavState]| {
            let h = point.stacked_h(s);
            DVector::from_iterator(
                h.len(),
                h.iter().zip(&point.scenario.tasks).map(|(h, t)| t.gamma1.eval(*h)),
            )
        };
        let w = |s: &[UavState]| gamma(s).norm_squared();
        let w_dot = (w(&point.flow(&u, eps)) - w(&point.flow(&u, -eps))) / (2.0 * eps);
        let expected = scalars.c * w(&point.states) + w_dot;
        let got = quad(&m.b0, &phi);
        assert!(
            (got - expected).abs() <= 1e-6 * expected.abs().max(1.0),
            "case {case}: {got} vs {expected}"
        );
    }
}

#[test]
fn constraint_blocks_reproduce_their_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    for _ in 0..20 {
        let point = Point::new(TWO_UAVS, vec![random_uav_state(&mut rng), random_uav_state(&mut rng)]);
        let m = point.matrices(CertificateScalars::default());
        let l = &point.problem.layout;
        let n = l.n_pairs();
        let z = DVector::from_fn(l.n_vars(), |_, _| rng.gen_range(-3.0..3.0));
        let phi = m.phi(Proposition::First, &z).unwrap();
        let u = z.rows(0, l.n_u);
        let delta = z.rows(l.delta_offset(), n);
        let alpha = z.rows(l.alpha_offset(), n);

        let mut b1 = 0.0;
        for row in &point.problem.cbf_rows {
            let q = l.pair(row.slack.vr, row.slack.task);
            let au: f64 = l.u(row.slack.vr).zip(&row.a).map(|(c, a)| a * u[c]).sum();
            b1 -= delta[q] * (au - row.b + delta[q]);
        }
        assert!((quad(&m.b1, &phi) - b1).abs() <= 1e-9 * b1.abs().max(1.0));

        let mut b2 = 0.0;
        for (i, rows) in point.problem.prioritization.iter().enumerate() {
            let cols = l.robot_pairs(i);
            let d = DVector::from_iterator(cols.len(), cols.clone().map(|q| delta[q]));
            let a = DVector::from_iterator(cols.len(), cols.map(|q| alpha[q]));
            let pa = &rows.phi * &a;
            b2 += pa.dot(&(&rows.theta * &d + &pa - &rows.psi));
        }
        assert!((quad(&m.b2, &phi) - b2).abs() <= 1e-9 * b2.abs().max(1.0));

        let b3 = m.forms.alpha_form(&alpha.into_owned()) + m.forms.delta_form(&delta.into_owned());
        assert!((quad(&m.b3, &phi) - b3).abs() <= 1e-9 * b3.abs().max(1.0));
    }
}

#[test]
fn relaxation_terms_are_nonpositive_at_solutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    for _ in 0..20 {
        let point = Point::new(TWO_UAVS, vec![random_uav_state(&mut rng), random_uav_state(&mut rng)]);
        let m = point.matrices(CertificateScalars::default());
        let phi = m.phi(Proposition::First, &point.solution.primal).unwrap();
        let scale = point.solution.delta.iter().fold(1.0f64, |a, d| a.max(d * d));
        assert!(quad(&m.b1, &phi) <= 1e-6 * scale, "{}", quad(&m.b1, &phi));
        assert!(quad(&m.b2, &phi) <= 1e-6 * scale, "{}", quad(&m.b2, &phi));
    }
}

#[test]
fn cardinality_form_holds_for_every_feasible_assignment() {
    let point = Point::new(TWO_UAVS, vec![UavState::new([0.0, 0.0], [1.0, 0.0, 0.0]); 2]);
    let forms = quadratic_constraint_forms(&point.problem);
    let n = point.problem.layout.n_pairs();
    let mut feasible = 0;
    for mask in 0u32..(1 << n) {
        let alpha: Vec<u8> = (0..n).map(|q| ((mask >> q) & 1) as u8).collect();
        if !point.problem.cardinality_holds(&alpha) {
            continue;
        }
        feasible += 1;
        let a = DVector::from_iterator(n, alpha.iter().map(|&x| f64::from(x)));
        assert!(forms.alpha_form(&a) <= 1e-12, "{alpha:?}");
    }
    assert!(feasible > 0);
    assert_eq!(forms.delta_form(&DVector::zeros(n)), 0.0);
}

#[test]
fn blocks_are_exactly_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(65);
    for _ in 0..10 {
        let point = Point::new(TWO_UAVS, vec![random_uav_state(&mut rng), random_uav_state(&mut rng)]);
        let m = point.matrices(CertificateScalars::default());
        for b in [&m.b0, &m.b1, &m.b2, &m.b3, &m.b0_prime] {
            assert_eq!(asymmetry(b), 0.0);
        }
    }
}

#[test]
fn eigenvalues_match_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for _ in 0..200 {
        let (a, b, d): (f64, f64, f64) = (
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        let m = DMatrix::from_row_slice(2, 2, &[a, b, b, d]);
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let e = jacobi_eigenvalues(&m).unwrap();
        assert!((e[0] - (mid - rad)).abs() <= 1e-10 && (e[1] - (mid + rad)).abs() <= 1e-10);
    }
    for _ in 0..200 {
        let x = DMatrix::<f64>::from_fn(3, 3, |_, _| rng.gen_range(-5.0..5.0));
        let m = (&x + x.transpose()) * 0.5;
        // trigonometric solution of the characteristic cubic
        let q = m.trace() / 3.0;
        let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
        let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let bm = (&m - DMatrix::identity(3, 3) * q) / p;
        let r = (bm.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let mid = 3.0 * q - hi - lo;
        let e = jacobi_eigenvalues(&m).unwrap();
        for (got, want) in e.iter().zip([lo, mid, hi]) {
            assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
        }
    }
}

#[test]
fn finer_grid_never_lowers_the_margin() {
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    for _ in 0..3 {
        let point = Point::new(TWO_UAVS, vec![random_uav_state(&mut rng), random_uav_state(&mut rng)]);
        let m = point.matrices(CertificateScalars::default());
        let coarse = log_grid(1e-2, 1e2, 3);
        let fine = log_grid(1e-2, 1e2, 5);
        let a = certificate_search(&m, Proposition::Second, &coarse, 1e-9).unwrap();
        let b = certificate_search(&m, Proposition::Second, &fine, 1e-9).unwrap();
        assert!(b.margin >= a.margin);
        assert_eq!(a.evaluated, 27);
        assert_eq!(b.evaluated, 125);
    }
}

#[test]
fn mismatched_layout_names_the_block() {
    let point = Point::new(TWO_UAVS, vec![UavState::new([0.0, 0.0], [1.0, 0.0, 0.0]); 2]);
    let modes = point.scenario.vr_modes();
    let inp = CertificateInputs {
        problem: &point.problem,
        states: &point.states,
        modes: &modes,
        tasks: &point.scenario.tasks,
        alpha: &point.solution.alpha,
        k_v: 4.0,
    };
    let l = &point.problem.layout;
    let bad = PhiLayout::new(l.n_t + 1, l.n_u, l.n_pairs(), l.n_pairs()).unwrap();
    match assemble_certificate_matrices(&inp, bad, CertificateScalars::default()) {
        Err(ConvergenceError::BlockDimension { block, .. }) => assert_eq!(block, "B0(1,1)"),
        other => panic!("unexpected {other:?}"),
    }
}
