//! Scenario files.
//!
//! A scenario is a TOML document with `schema_version = 1`. Every field of
//! `[params]` is optional and defaults to the values in [`SimParams::default`].
//!
//! ```toml
//! schema_version = 1
//! name = "single_uav"
//!
//! [params]
//! dt = 0.01
//! t_end = 10.0
//!
//! [[robots]]
//! id = "uav"
//! position = [0.0, 0.0]
//! velocity = [2.0, 0.0]      # body frame
//! heading = 0.0
//! modes = [
//!     { id = "cruise", kind = "cruise", features = ["wing"] },
//!     { id = "hover", kind = "hover", features = ["rotor"] },
//! ]
//!
//! [[capabilities]]
//! id = "flight"
//! features = ["wing", "rotor"]
//!
//! [[tasks]]
//! id = "reach"
//! target = [6.0, 1.0]
//! capabilities = ["flight"]
//!
//! [[restrictions]]
//! name = "no_cruise"
//! min = [-10.0, 1.5]
//! max = [10.0, 2.5]
//! modes = ["cruise"]
//! ```
//!
//! Mode kinds are `cruise`, `hover` and `velocity`. A mode may override its
//! energy with `weights` and `u_eff` (two entries each); by default cruise
//! costs `(v_x - v_x_eff)^2 + omega^2` and the other kinds `|u|^2`.
//! Features are declared implicitly by the modes and capabilities that
//! mention them. Tasks default to `n_min = n_max = 1`.

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::Deserialize;
use thiserror::Error;

use crate::allocator::AllocationParams;
use crate::cbf::{ClassK, TaskSpec};
use crate::convergence::{log_grid, CertificateScalars};
use crate::dynamics::{DynamicsError, EnergyParams, ModeKind, ModeSpec, UavState};
use crate::encoding::{
    build_mode_index, mapping_matrices, specialization_and_penalty, EncodingError, EncodingGraph, MappingMatrices,
    ModeIndex, Region, Restriction, RobotSpec, SpecializationSet,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl ScenarioError {
    pub fn is_io(&self) -> bool {
        matches!(self, ScenarioError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub k_v: f64,
    pub alloc: AllocationParams,
    pub v_x_eff: f64,
    pub gamma1_slope: f64,
    pub gamma2_slope: f64,
    pub dt: f64,
    pub t_end: f64,
    pub completion_radius: f64,
    pub scalars: CertificateScalars,
    pub tau_grid: Vec<f64>,
    pub cert_tol: f64,
    pub node_limit: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            k_v: 4.0,
            alloc: AllocationParams::default(),
            v_x_eff: 2.0,
            gamma1_slope: 5.0,
            gamma2_slope: 1.0,
            dt: 0.01,
            t_end: 10.0,
            completion_radius: 0.05,
            scalars: CertificateScalars::default(),
            tau_grid: log_grid(1e-3, 1e3, 13),
            cert_tol: 1e-9,
            node_limit: 10_000,
        }
    }
}

impl SimParams {
    /// Number of control steps, `round(t_end / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotInit {
    pub id: String,
    pub state: UavState,
    pub modes: Vec<ModeSpec>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub graph: EncodingGraph,
    pub index: ModeIndex,
    pub maps: MappingMatrices,
    /// Specialization before region restrictions.
    pub base_spec: SpecializationSet,
    pub robots: Vec<RobotInit>,
    pub tasks: Vec<TaskSpec>,
    pub restrictions: Vec<Restriction>,
    pub params: SimParams,
}

impl Scenario {
    /// Mode of every virtual robot, in virtual-robot order.
    pub fn vr_modes(&self) -> Vec<&ModeSpec> {
        self.robots.iter().flat_map(|r| r.modes.iter()).collect()
    }

    pub fn initial_states(&self) -> Vec<UavState> {
        self.robots.iter().map(|r| r.state).collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    name: Option<String>,
    #[serde(default)]
    params: RawParams,
    robots: Vec<RawRobot>,
    #[serde(default)]
    capabilities: Vec<RawCapability>,
    tasks: Vec<RawTask>,
    #[serde(default)]
    restrictions: Vec<RawRestriction>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    k_v: Option<f64>,
    l1: Option<f64>,
    l2: Option<f64>,
    kappa: Option<f64>,
    delta_max: Option<f64>,
    v_x_eff: Option<f64>,
    gamma1_slope: Option<f64>,
    gamma2_slope: Option<f64>,
    dt: Option<f64>,
    t_end: Option<f64>,
    completion_radius: Option<f64>,
    c: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    tau_min: Option<f64>,
    tau_max: Option<f64>,
    tau_points: Option<usize>,
    cert_tol: Option<f64>,
    node_limit: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobot {
    id: String,
    position: [f64; 2],
    #[serde(default)]
    velocity: [f64; 2],
    #[serde(default)]
    heading: f64,
    modes: Vec<RawMode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    id: String,
    kind: String,
    #[serde(default)]
    features: Vec<String>,
    weights: Option<Vec<f64>>,
    u_eff: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCapability {
    id: String,
    #[serde(default)]
    features: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    id: String,
    target: [f64; 2],
    #[serde(default)]
    capabilities: Vec<String>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    gamma1_slope: Option<f64>,
    gamma2_slope: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRestriction {
    name: String,
    min: [f64; 2],
    max: [f64; 2],
    modes: Vec<String>,
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn params_from(raw: &RawParams) -> Result<SimParams, ScenarioError> {
    let d = SimParams::default();
    let p = SimParams {
        k_v: positive("k_v", raw.k_v.unwrap_or(d.k_v))?,
        alloc: AllocationParams {
            l1: positive("l1", raw.l1.unwrap_or(d.alloc.l1))?,
            l2: positive("l2", raw.l2.unwrap_or(d.alloc.l2))?,
            kappa: positive("kappa", raw.kappa.unwrap_or(d.alloc.kappa))?,
            delta_max: positive("delta_max", raw.delta_max.unwrap_or(d.alloc.delta_max))?,
        },
        v_x_eff: raw.v_x_eff.unwrap_or(d.v_x_eff),
        gamma1_slope: positive("gamma1_slope", raw.gamma1_slope.unwrap_or(d.gamma1_slope))?,
        gamma2_slope: positive("gamma2_slope", raw.gamma2_slope.unwrap_or(d.gamma2_slope))?,
        dt: positive("dt", raw.dt.unwrap_or(d.dt))?,
        t_end: positive("t_end", raw.t_end.unwrap_or(d.t_end))?,
        completion_radius: positive(
            "completion_radius",
            raw.completion_radius.unwrap_or(d.completion_radius),
        )?,
        scalars: CertificateScalars {
            c: positive("c", raw.c.unwrap_or(d.scalars.c))?,
            c1: positive("c1", raw.c1.unwrap_or(d.scalars.c1))?,
            c2: positive("c2", raw.c2.unwrap_or(d.scalars.c2))?,
        },
        tau_grid: {
            let lo = positive("tau_min", raw.tau_min.unwrap_or(1e-3))?;
            let hi = positive("tau_max", raw.tau_max.unwrap_or(1e3))?;
            let n = raw.tau_points.unwrap_or(13);
            if n == 0 || hi < lo {
                return Err(invalid("tau grid needs tau_points >= 1 and tau_max >= tau_min"));
            }
            log_grid(lo, hi, n)
        },
        cert_tol: raw.cert_tol.unwrap_or(d.cert_tol),
        node_limit: raw.node_limit.unwrap_or(d.node_limit),
    };
    if !p.v_x_eff.is_finite() {
        return Err(invalid("v_x_eff must be finite"));
    }
    if !(p.alloc.kappa > 1.0) {
        return Err(invalid("kappa must exceed 1"));
    }
    if p.t_end < p.dt {
        return Err(invalid(format!("t_end ({}) must be at least dt ({})", p.t_end, p.dt)));
    }
    if p.node_limit == 0 {
        return Err(invalid("node_limit must be at least 1"));
    }
    Ok(p)
}

fn mode_from(raw: &RawMode, v_x_eff: f64) -> Result<ModeSpec, ScenarioError> {
    let kind =
        ModeKind::parse(&raw.kind).ok_or_else(|| invalid(format!("mode `{}`: unknown kind `{}`", raw.id, raw.kind)))?;
    let base = match kind {
        ModeKind::Cruise => ModeSpec::cruise(v_x_eff),
        ModeKind::Hover => ModeSpec::hover(),
        ModeKind::Velocity => ModeSpec::velocity(raw.id.clone()),
    };
    let energy = EnergyParams {
        weights: raw.weights.clone().unwrap_or(base.energy.weights),
        u_eff: raw.u_eff.clone().unwrap_or(base.energy.u_eff),
    };
    Ok(ModeSpec::new(raw.id.clone(), kind, energy)?)
}

fn push_unique(list: &mut Vec<String>, id: &str) {
    if !list.iter().any(|f| f == id) {
        list.push(id.to_string());
    }
}

fn check_finite(what: &str, values: &[f64]) -> Result<(), ScenarioError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be finite")))
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Schema(raw.schema_version));
    }
    let params = params_from(&raw.params)?;
    if raw.robots.is_empty() {
        return Err(invalid("at least one robot is required"));
    }
    if raw.tasks.is_empty() {
        return Err(invalid("at least one task is required"));
    }

    let mut features = Vec::new();
    let mut robots = Vec::new();
    let mut robot_specs = Vec::new();
    let mut mode_feature_edges = Vec::new();
    for r in &raw.robots {
        check_finite(
            &format!("robot `{}` state", r.id),
            &[r.position[0], r.position[1], r.velocity[0], r.velocity[1], r.heading],
        )?;
        let mut modes = Vec::new();
        for m in &r.modes {
            modes.push(mode_from(m, params.v_x_eff)?);
            for f in &m.features {
                push_unique(&mut features, f);
                mode_feature_edges.push((r.id.clone(), m.id.clone(), f.clone()));
            }
        }
        robot_specs.push(RobotSpec {
            id: r.id.clone(),
            modes: r.modes.iter().map(|m| m.id.clone()).collect(),
        });
        robots.push(RobotInit {
            id: r.id.clone(),
            state: UavState::new(r.position, [r.velocity[0], r.velocity[1], r.heading]),
            modes,
        });
    }

    let mut feature_capability_edges = Vec::new();
    for c in &raw.capabilities {
        for f in &c.features {
            push_unique(&mut features, f);
            feature_capability_edges.push((f.clone(), c.id.clone()));
        }
    }
    let capabilities: Vec<String> = raw.capabilities.iter().map(|c| c.id.clone()).collect();

    let mut tasks = Vec::new();
    let mut task_capability_edges = Vec::new();
    for t in &raw.tasks {
        check_finite(&format!("task `{}` target", t.id), &t.target)?;
        let mut spec = TaskSpec::reach(t.id.clone(), t.target);
        spec.gamma1 = ClassK::linear(positive("gamma1_slope", t.gamma1_slope.unwrap_or(params.gamma1_slope))?);
        spec.gamma2 = ClassK::linear(positive("gamma2_slope", t.gamma2_slope.unwrap_or(params.gamma2_slope))?);
        spec.n_min = t.n_min.unwrap_or(1);
        spec.n_max = t.n_max.unwrap_or(spec.n_min.max(1));
        if spec.n_min > spec.n_max {
            return Err(invalid(format!("task `{}`: n_min exceeds n_max", t.id)));
        }
        for c in &t.capabilities {
            task_capability_edges.push((t.id.clone(), c.clone()));
        }
        tasks.push(spec);
    }

    let mut restrictions = Vec::new();
    for r in &raw.restrictions {
        check_finite(
            &format!("restriction `{}` bounds", r.name),
            &[r.min[0], r.min[1], r.max[0], r.max[1]],
        )?;
        if r.min[0] > r.max[0] || r.min[1] > r.max[1] {
            return Err(invalid(format!("restriction `{}`: min exceeds max", r.name)));
        }
        for m in &r.modes {
            if !raw.robots.iter().any(|rb| rb.modes.iter().any(|rm| &rm.id == m)) {
                return Err(invalid(format!("restriction `{}` names unknown mode `{m}`", r.name)));
            }
        }
        restrictions.push(Restriction {
            name: r.name.clone(),
            region: Region {
                min: Vector2::from(r.min),
                max: Vector2::from(r.max),
            },
            modes: r.modes.clone(),
        });
    }

    let graph = EncodingGraph::new(
        robot_specs,
        features,
        capabilities,
        tasks.iter().map(|t| t.id.clone()).collect(),
        &mode_feature_edges,
        &feature_capability_edges,
        &task_capability_edges,
    )?;
    let index = build_mode_index(&graph)?;
    let maps = mapping_matrices(&graph, &index);
    let base_spec = specialization_and_penalty(&maps);

    Ok(Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        graph,
        index,
        maps,
        base_spec,
        robots,
        tasks,
        restrictions,
        params,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
[[robots]]
id = "r"
position = [0.0, 0.0]
modes = [{ id = "walk", kind = "velocity", features = ["legs"] }]
[[capabilities]]
id = "move"
features = ["legs"]
[[tasks]]
id = "t"
target = [1.0, 0.0]
capabilities = ["move"]
"#;

    #[test]
    fn minimal_uses_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.params, SimParams::default());
        assert_eq!(s.index.n_vr(), 1);
        assert_eq!(s.base_spec.s, vec![vec![1]]);
        assert_eq!(s.params.n_steps(), 1000);
    }

    #[test]
    fn zero_dt_is_rejected() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 1\n[params]\ndt = 0.0");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");
    }

    #[test]
    fn short_horizon_is_rejected() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 1\n[params]\nt_end = 0.001");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn wrong_schema_version() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Schema(2))));
    }

    #[test]
    fn unknown_field_reports_position() {
        let text = MINIMAL.replace("target = [1.0, 0.0]", "target = [1.0, 0.0]\ncolour = 3");
        let err = parse_scenario(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("colour") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_capability_is_an_encoding_error() {
        let text = MINIMAL.replace("capabilities = [\"move\"]", "capabilities = [\"swim\"]");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Encoding(_))));
    }

    #[test]
    fn unknown_mode_kind() {
        let text = MINIMAL.replace("kind = \"velocity\"", "kind = \"teleport\"");
        assert!(parse_scenario(&text).unwrap_err().to_string().contains("teleport"));
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_scenario("/nonexistent/scenario.toml").unwrap_err();
        assert!(err.is_io());
    }
}
