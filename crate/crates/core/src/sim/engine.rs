//! Closed-loop driver: allocate, control and integrate once per step.

use nalgebra::{DMatrix, Vector2};
use thiserror::Error;

use crate::allocator::{
    assemble_miqp, solve_allocation, AllocError, AllocationSolution, AssemblyError, AssemblyInputs, BnbOptions,
    MiqpProblem, SolveStatus,
};
use crate::cbf::{high_rel_degree_row, kinematic_row, task_h, CbfError, CbfRow, SlackIndex};
use crate::convergence::{
    assemble_certificate_matrices, certificate_search, CertificateInputs, ConvergenceError, PhiLayout, Proposition,
};
use crate::dynamics::{energy_cost, step_robot, DynamicsError, IntegrationError, UavState};
use crate::encoding::{apply_region_restriction, SpecializationSet};

use super::scenario::Scenario;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("allocation infeasible at t = {t}")]
    Infeasible { t: f64 },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Cbf(#[from] CbfError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("state has {got} robots, scenario has {expected}")]
    StateLength { expected: usize, got: usize },
}

/// A failed step together with what was known when it failed.
#[derive(Debug)]
pub struct StepFailure {
    pub error: StepError,
    pub record: StepRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotRecord {
    pub state: UavState,
    /// Virtual robot and task driving this robot, if any.
    pub vr: Option<usize>,
    pub task: Option<usize>,
    pub u: [f64; 2],
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateSample {
    pub which: Proposition,
    pub tau: [f64; 3],
    pub margin: f64,
    pub feasible: bool,
}

/// State at `t` and the decision applied over `[t, t + dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub robots: Vec<RobotRecord>,
    /// Per task, the largest `h_j(x_i)` over all robots.
    pub task_h: Vec<f64>,
    pub alpha: Vec<u8>,
    pub delta: Vec<f64>,
    pub cost: f64,
    pub status: SolveStatus,
    pub nodes: usize,
    pub max_kkt: f64,
    pub certificate: Option<CertificateSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scenario: String,
    pub robots: Vec<String>,
    pub tasks: Vec<String>,
    /// `(robot, mode id)` of every virtual robot.
    pub vrs: Vec<(usize, String)>,
    pub dt: f64,
    pub records: Vec<StepRecord>,
    pub final_t: f64,
    pub final_states: Vec<UavState>,
    /// Set when a step failed; the last record is its diagnostic.
    pub aborted: Option<String>,
}

impl Trace {
    pub fn empty(scenario: &Scenario) -> Self {
        Self {
            scenario: scenario.name.clone(),
            robots: scenario.robots.iter().map(|r| r.id.clone()).collect(),
            tasks: scenario.tasks.iter().map(|t| t.id.clone()).collect(),
            vrs: scenario
                .index
                .pairs()
                .iter()
                .map(|&(i, k)| (i, scenario.robots[i].modes[k].id.clone()))
                .collect(),
            dt: scenario.params.dt,
            records: Vec::new(),
            final_t: 0.0,
            final_states: scenario.initial_states(),
            aborted: None,
        }
    }

    pub fn mode_name(&self, vr: Option<usize>) -> &str {
        vr.map_or("", |v| self.vrs[v].1.as_str())
    }

    /// Distance from each task target to the closest robot at the final state.
    pub fn final_distances(&self, scenario: &Scenario) -> Vec<f64> {
        scenario
            .tasks
            .iter()
            .map(|t| {
                self.final_states
                    .iter()
                    .map(|s| (s.x - t.target).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// First record time at which each task's closest robot is within `radius`.
    pub fn completion_times(&self, radius: f64) -> Vec<Option<f64>> {
        let r2 = -radius * radius;
        (0..self.tasks.len())
            .map(|j| self.records.iter().find(|r| r.task_h[j] >= r2).map(|r| r.t))
            .collect()
    }

    pub fn total_energy(&self) -> Vec<f64> {
        (0..self.robots.len())
            .map(|i| self.records.iter().map(|r| r.robots[i].energy * self.dt).sum())
            .collect()
    }
}

/// Options that do not belong to the scenario itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub check_certificates: bool,
    pub cert_sample_hz: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            check_certificates: false,
            cert_sample_hz: 1.0,
        }
    }
}

/// Specialization after the region restrictions at `states`.
pub fn restricted_specialization(scenario: &Scenario, states: &[UavState]) -> SpecializationSet {
    let positions: Vec<Vector2<f64>> = states.iter().map(|s| s.x).collect();
    apply_region_restriction(
        &scenario.base_spec,
        &scenario.restrictions,
        &scenario.graph,
        &scenario.index,
        &positions,
    )
}

/// One row per (virtual robot, task) pair.
pub fn cbf_rows(scenario: &Scenario, states: &[UavState]) -> Result<Vec<CbfRow>, StepError> {
    let modes = scenario.vr_modes();
    let k_v = scenario.params.k_v;
    let mut rows = Vec::with_capacity(modes.len() * scenario.tasks.len());
    for (v, &(i, _)) in scenario.index.pairs().iter().enumerate() {
        let state = &states[i];
        let mode = modes[v];
        for (j, task) in scenario.tasks.iter().enumerate() {
            let slack = SlackIndex { vr: v, task: j };
            let row = if mode.kind.is_uav() {
                high_rel_degree_row(slack, task, state, mode, k_v)
            } else {
                let (h, grad) = task_h(task, &state.x);
                let g = mode.position_input_matrix();
                let g = DMatrix::from_column_slice(2, 2, g.as_slice());
                kinematic_row(slack, h, &grad, &mode.position_drift(state), &g, task.gamma1)?
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// The allocation program at `states`.
pub fn build_problem(scenario: &Scenario, states: &[UavState]) -> Result<MiqpProblem, StepError> {
    if states.len() != scenario.robots.len() {
        return Err(StepError::StateLength {
            expected: scenario.robots.len(),
            got: states.len(),
        });
    }
    let spec = restricted_specialization(scenario, states);
    let rows = cbf_rows(scenario, states)?;
    let modes = scenario.vr_modes();
    Ok(assemble_miqp(AssemblyInputs {
        index: &scenario.index,
        modes: &modes,
        maps: &scenario.maps,
        spec: &spec,
        tasks: &scenario.tasks,
        cbf_rows: rows,
        params: scenario.params.alloc,
    })?)
}

fn task_h_values(scenario: &Scenario, states: &[UavState]) -> Vec<f64> {
    scenario
        .tasks
        .iter()
        .map(|t| {
            states
                .iter()
                .map(|s| task_h(t, &s.x).0)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Evaluates the convergence certificate for `solution` at `states`.
pub fn certify(
    scenario: &Scenario,
    problem: &MiqpProblem,
    states: &[UavState],
    alpha: &[u8],
) -> Result<CertificateSample, ConvergenceError> {
    let modes = scenario.vr_modes();
    let inp = CertificateInputs {
        problem,
        states,
        modes: &modes,
        tasks: &scenario.tasks,
        alpha,
        k_v: scenario.params.k_v,
    };
    let which = inp.proposition();
    let mats = assemble_certificate_matrices(&inp, PhiLayout::for_problem(problem)?, scenario.params.scalars)?;
    let rep = certificate_search(&mats, which, &scenario.params.tau_grid, scenario.params.cert_tol)?;
    Ok(CertificateSample {
        which,
        tau: rep.tau,
        margin: rep.margin,
        feasible: rep.feasible,
    })
}

/// Result of one successful step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: Vec<UavState>,
    pub solution: AllocationSolution,
    pub record: StepRecord,
    pub problem: MiqpProblem,
}

/// Allocates at `states`, applies the selected inputs and integrates one step.
pub fn simulation_step(
    scenario: &Scenario,
    step: usize,
    states: &[UavState],
    previous: Option<&AllocationSolution>,
) -> Result<StepOutcome, Box<StepFailure>> {
    let t = step as f64 * scenario.params.dt;
    let n_pairs = scenario.index.n_vr() * scenario.tasks.len();
    let mut record = StepRecord {
        step,
        t,
        robots: states
            .iter()
            .map(|s| RobotRecord {
                state: *s,
                vr: None,
                task: None,
                u: [0.0; 2],
                energy: 0.0,
            })
            .collect(),
        task_h: Vec::new(),
        alpha: vec![0; n_pairs],
        delta: vec![0.0; n_pairs],
        cost: f64::NAN,
        status: SolveStatus::Infeasible,
        nodes: 0,
        max_kkt: 0.0,
        certificate: None,
    };
    let fail = |error: StepError, record: StepRecord| Box::new(StepFailure { error, record });

    let problem = match build_problem(scenario, states) {
        Ok(p) => p,
        Err(e) => return Err(fail(e, record)),
    };
    record.task_h = task_h_values(scenario, states);
    let opts = BnbOptions {
        node_limit: scenario.params.node_limit,
        warm_alpha: previous.map(|p| p.alpha.clone()),
        warm_primal: previous.map(|p| p.primal.clone()),
    };
    let solution = match solve_allocation(&problem, &opts) {
        Ok(s) => s,
        Err(e) => return Err(fail(e.into(), record)),
    };
    record.status = solution.status;
    record.nodes = solution.nodes;
    record.max_kkt = solution.max_kkt;
    record.cost = solution.cost;
    if solution.status == SolveStatus::Infeasible {
        return Err(fail(StepError::Infeasible { t }, record));
    }
    record.alpha = solution.alpha.clone();
    record.delta = solution.delta.clone();

    let n_t = scenario.tasks.len();
    for (v, j) in solution.assignments(n_t) {
        let i = scenario.index.inverse(v).expect("assigned virtual robot exists").0;
        let r = &mut record.robots[i];
        if r.vr.is_none() {
            r.vr = Some(v);
            r.task = Some(j);
        }
    }

    let modes = scenario.vr_modes();
    let mut next = Vec::with_capacity(states.len());
    for (i, state) in states.iter().enumerate() {
        let r = &mut record.robots[i];
        let stepped = match r.vr {
            Some(v) => {
                let u = &solution.u[v];
                r.u = [u[0], u[1]];
                r.energy = match energy_cost(modes[v], u) {
                    Ok((e, _)) => e,
                    Err(e) => return Err(fail(e.into(), record)),
                };
                step_robot(state, Some((modes[v], u)), scenario.params.k_v, scenario.params.dt)
            }
            None => {
                let robot = &scenario.robots[i];
                if robot.modes.iter().any(|m| m.kind.is_uav()) {
                    step_robot(state, None, scenario.params.k_v, scenario.params.dt)
                } else {
                    Ok(*state)
                }
            }
        };
        match stepped {
            Ok(s) => next.push(s),
            Err(e) => return Err(fail(e.into(), record)),
        }
    }

    Ok(StepOutcome {
        next,
        solution,
        record,
        problem,
    })
}

fn sample_every(dt: f64, hz: f64) -> Option<usize> {
    (hz > 0.0 && hz.is_finite()).then(|| ((1.0 / (hz * dt)).round() as usize).max(1))
}

/// Runs the scenario from `t = 0` for `round(t_end / dt)` steps.
pub fn run_simulation(scenario: &Scenario, opts: &RunOptions) -> Trace {
    let mut trace = Trace::empty(scenario);
    let mut states = scenario.initial_states();
    let mut previous: Option<AllocationSolution> = None;
    let every = if opts.check_certificates {
        sample_every(scenario.params.dt, opts.cert_sample_hz)
    } else {
        None
    };
    let n = scenario.params.n_steps();
    for step in 0..n {
        match simulation_step(scenario, step, &states, previous.as_ref()) {
            Ok(mut out) => {
                if every.is_some_and(|e| step % e == 0) {
                    out.record.certificate = certify(scenario, &out.problem, &states, &out.solution.alpha).ok();
                }
                trace.records.push(out.record);
                states = out.next;
                previous = Some(out.solution);
            }
            Err(f) => {
                trace.aborted = Some(f.error.to_string());
                trace.final_t = f.record.t;
                trace.records.push(f.record);
                trace.final_states = states;
                return trace;
            }
        }
    }
    trace.final_t = n as f64 * scenario.params.dt;
    trace.final_states = states;
    trace
}
