//! Scenario loading, the closed-loop simulator and trace export.

mod engine;
mod export;
mod scenario;

pub use engine::{
    build_problem, cbf_rows, certify, restricted_specialization, run_simulation, simulation_step, CertificateSample,
    RobotRecord, RunOptions, StepError, StepFailure, StepOutcome, StepRecord, Trace,
};
pub use export::{export_traces, read_trace, summary, trajectory_file, ExportError};
pub use scenario::{load_scenario, parse_scenario, RobotInit, Scenario, ScenarioError, SimParams, SCHEMA_VERSION};
