use multimode_alloc::allocator::SolveStatus;
use multimode_alloc::dynamics::{energy_cost, step_robot, UavState};
use multimode_alloc::sim::{
    build_problem, export_traces, parse_scenario, read_trace, run_simulation, simulation_step, RunOptions, Scenario,
    StepError, Trace,
};
use proptest::prelude::*;

const HOVER_PAIR: &str = r#"
schema_version = 1
name = "hover_pair"
[params]
t_end = 0.5
[[robots]]
id = "a"
position = [0.0, 0.0]
velocity = [1.0, 0.0]
modes = [
    { id = "cruise", kind = "cruise", features = ["wing"] },
    { id = "hover", kind = "hover", features = ["rotor"] },
]
[[robots]]
id = "b"
position = [2.0, 0.0]
modes = [{ id = "walk", kind = "velocity", features = ["legs"] }]
[[capabilities]]
id = "go"
features = ["wing", "rotor", "legs"]
[[tasks]]
id = "p"
target = [1.0, 1.0]
capabilities = ["go"]
[[tasks]]
id = "q"
target = [2.5, -1.0]
capabilities = ["go"]
"#;

const BANDED: &str = r#"
schema_version = 1
name = "banded"
[params]
t_end = 0.3
[[robots]]
id = "a"
position = [0.0, 2.0]
velocity = [1.0, 0.0]
modes = [
    { id = "cruise", kind = "cruise", features = ["wing"] },
    { id = "hover", kind = "hover", features = ["rotor"] },
]
[[capabilities]]
id = "fly"
features = ["wing", "rotor"]
[[tasks]]
id = "p"
target = [3.0, 2.0]
capabilities = ["fly"]
[[restrictions]]
name = "band"
min = [-10.0, 1.5]
max = [10.0, 2.5]
modes = ["cruise"]
"#;

fn run(text: &str) -> (Scenario, Trace) {
    let s = parse_scenario(text).unwrap();
    let t = run_simulation(&s, &RunOptions::default());
    assert!(t.aborted.is_none(), "{:?}", t.aborted);
    (s, t)
}

#[test]
fn export_round_trip_is_exact() {
    let (s, trace) = run(HOVER_PAIR);
    let dir = tempfile::tempdir().unwrap();
    export_traces(&trace, Some(&s), dir.path()).unwrap();
    assert_eq!(read_trace(dir.path()).unwrap(), trace);
}

#[test]
fn certificates_survive_export() {
    let s = parse_scenario(HOVER_PAIR).unwrap();
    let opts = RunOptions {
        check_certificates: true,
        cert_sample_hz: 10.0,
    };
    let trace = run_simulation(&s, &opts);
    assert!(trace.records.iter().filter(|r| r.certificate.is_some()).count() >= 5);
    let dir = tempfile::tempdir().unwrap();
    export_traces(&trace, Some(&s), dir.path()).unwrap();
    assert_eq!(read_trace(dir.path()).unwrap(), trace);
}

#[test]
fn empty_trace_writes_headers_only() {
    let s = parse_scenario(HOVER_PAIR).unwrap();
    let trace = Trace::empty(&s);
    let dir = tempfile::tempdir().unwrap();
    export_traces(&trace, None, dir.path()).unwrap();
    let alloc = std::fs::read_to_string(dir.path().join("allocation.csv")).unwrap();
    assert_eq!(alloc.lines().count(), 1);
    assert!(alloc.starts_with("t,status,cost,nodes,max_kkt,alpha[a/cruise/p]"));
    assert_eq!(read_trace(dir.path()).unwrap(), trace);
}

#[test]
fn runs_are_deterministic() {
    assert_eq!(run(HOVER_PAIR).1, run(HOVER_PAIR).1);
}

#[test]
fn records_are_consistent() {
    let (s, trace) = run(HOVER_PAIR);
    let n_t = s.tasks.len();
    assert_eq!(trace.records.len(), s.params.n_steps());
    for rec in &trace.records {
        for (i, r) in rec.robots.iter().enumerate() {
            let active: Vec<usize> = s
                .index
                .pairs()
                .iter()
                .enumerate()
                .filter(|(_, &(ri, _))| ri == i)
                .filter(|(v, _)| (0..n_t).any(|j| rec.alpha[v * n_t + j] == 1))
                .map(|(v, _)| v)
                .collect();
            assert!(
                active.len() <= 1,
                "robot {i} runs {} modes at t = {}",
                active.len(),
                rec.t
            );
            assert_eq!(r.vr, active.first().copied());
            if let (Some(v), Some(j)) = (r.vr, r.task) {
                assert_eq!(rec.alpha[v * n_t + j], 1);
            }
        }
    }
}

#[test]
fn recorded_energy_matches_inputs() {
    let (s, trace) = run(HOVER_PAIR);
    let modes = s.vr_modes();
    let mut total = vec![0.0; s.robots.len()];
    for rec in &trace.records {
        for (i, r) in rec.robots.iter().enumerate() {
            let e = r.vr.map_or(0.0, |v| energy_cost(modes[v], &r.u).unwrap().0);
            assert_eq!(e, r.energy);
            total[i] += e * trace.dt;
        }
    }
    assert_eq!(total, trace.total_energy());
}

#[test]
fn each_step_is_one_rk4_step() {
    let (s, trace) = run(HOVER_PAIR);
    let modes = s.vr_modes();
    let mut next_records = trace.records.iter().skip(1).map(|r| &r.robots);
    for rec in &trace.records {
        let after: Vec<UavState> = match next_records.next() {
            Some(robots) => robots.iter().map(|r| r.state).collect(),
            None => trace.final_states.clone(),
        };
        for (i, r) in rec.robots.iter().enumerate() {
            let expected = match r.vr {
                Some(v) => step_robot(&r.state, Some((modes[v], &r.u)), s.params.k_v, s.params.dt).unwrap(),
                None if s.robots[i].modes.iter().any(|m| m.kind.is_uav()) => {
                    step_robot(&r.state, None, s.params.k_v, s.params.dt).unwrap()
                }
                None => r.state,
            };
            assert_eq!(expected, after[i]);
        }
    }
}

#[test]
fn restricted_mode_is_never_selected_inside_region() {
    let (s, trace) = run(BANDED);
    let band = &s.restrictions[0].region;
    let mut inside = 0;
    for rec in &trace.records {
        if band.contains(&rec.robots[0].state.x) {
            inside += 1;
            assert_ne!(trace.mode_name(rec.robots[0].vr), "cruise", "t = {}", rec.t);
        }
    }
    assert!(inside > 0);
}

#[test]
fn wrong_state_count_is_rejected() {
    let s = parse_scenario(HOVER_PAIR).unwrap();
    let err = build_problem(&s, &s.initial_states()[..1]).unwrap_err();
    assert!(matches!(err, StepError::StateLength { expected: 2, got: 1 }));
    let failure = simulation_step(&s, 0, &[], None).unwrap_err();
    assert!(matches!(failure.error, StepError::StateLength { .. }));
}

#[test]
fn infeasible_allocation_aborts_with_diagnostic() {
    let text = HOVER_PAIR.replace(
        "id = \"q\"\ntarget = [2.5, -1.0]",
        "id = \"q\"\ntarget = [2.5, -1.0]\nn_min = 3\nn_max = 3",
    );
    let s = parse_scenario(&text).unwrap();
    let trace = run_simulation(&s, &RunOptions::default());
    assert!(trace.aborted.as_deref().is_some_and(|m| m.contains("infeasible")));
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.records[0].status, SolveStatus::Infeasible);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn export_preserves_arbitrary_floats(
        xs in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6),
        dt in 1e-4f64..0.5,
    ) {
        let s = parse_scenario(HOVER_PAIR).unwrap();
        let mut params = s.params.clone();
        params.t_end = 0.02;
        let s = Scenario { params, ..s };
        let mut trace = run_simulation(&s, &RunOptions::default());
        trace.dt = dt;
        let rec = &mut trace.records[0];
        rec.robots[0].state = UavState::new([xs[0], xs[1]], [xs[2], xs[3], xs[4]]);
        rec.cost = xs[5];
        rec.task_h[0] = xs[0] * xs[5];
        let dir = tempfile::tempdir().unwrap();
        export_traces(&trace, None, dir.path()).unwrap();
        prop_assert_eq!(read_trace(dir.path()).unwrap(), trace);
    }
}
