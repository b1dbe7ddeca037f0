//! Task-to-mode encoding.
//!
//! Every mode of every physical robot becomes a *virtual robot*. Virtual
//! robots are numbered lexicographically by `(robot, mode)`, so robot 0's
//! modes come first, then robot 1's, and so on. Capabilities reach a virtual
//! robot through the features of its mode. That gives the robot-to-capability
//! matrix `F` (capabilities x virtual robots) and the capability-to-task
//! matrix `T` (tasks x capabilities). From these the per-virtual-robot
//! specialization diagonal `s` and penalty diagonal `pi = 1 - s` are derived.
//!
//! Indices in this module are zero-based.

use std::collections::{HashMap, HashSet};

use nalgebra::Vector2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("robot `{0}` declares no modes")]
    NoModes(String),
    #[error("duplicate (robot, mode) pair (`{robot}`, `{mode}`)")]
    DuplicateMode { robot: String, mode: String },
    #[error("edge references undeclared {kind} `{id}`")]
    UnknownNode { kind: &'static str, id: String },
}

/// A physical robot and the ids of its modes, in mode order.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub id: String,
    pub modes: Vec<String>,
}

/// Robots, features, capabilities, tasks and the edges among them.
///
/// Edge endpoints are stored as ids; [`EncodingGraph::new`] checks that every
/// endpoint is declared.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingGraph {
    robots: Vec<RobotSpec>,
    features: Vec<String>,
    capabilities: Vec<String>,
    tasks: Vec<String>,
    /// (robot index, mode index, feature index)
    mode_features: Vec<(usize, usize, usize)>,
    /// (feature index, capability index)
    feature_capabilities: Vec<(usize, usize)>,
    /// (task index, capability index)
    task_capabilities: Vec<(usize, usize)>,
}

fn index_of(ids: &[String], kind: &'static str) -> Result<HashMap<String, usize>, EncodingError> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(EncodingError::DuplicateId { kind, id: id.clone() });
        }
    }
    Ok(map)
}

fn lookup(map: &HashMap<String, usize>, kind: &'static str, id: &str) -> Result<usize, EncodingError> {
    map.get(id).copied().ok_or_else(|| EncodingError::UnknownNode {
        kind,
        id: id.to_string(),
    })
}

impl EncodingGraph {
    /// Builds and validates a graph from id-based edge lists.
    ///
    /// `mode_feature_edges` are `(robot, mode, feature)` triples,
    /// `feature_capability_edges` are `(feature, capability)` pairs and
    /// `task_capability_edges` are `(task, capability)` pairs.
    pub fn new(
        robots: Vec<RobotSpec>,
        features: Vec<String>,
        capabilities: Vec<String>,
        tasks: Vec<String>,
        mode_feature_edges: &[(String, String, String)],
        feature_capability_edges: &[(String, String)],
        task_capability_edges: &[(String, String)],
    ) -> Result<Self, EncodingError> {
        let robot_ids: Vec<String> = robots.iter().map(|r| r.id.clone()).collect();
        let robot_map = index_of(&robot_ids, "robot")?;
        let feature_map = index_of(&features, "feature")?;
        let capability_map = index_of(&capabilities, "capability")?;
        let task_map = index_of(&tasks, "task")?;

        let mut mode_maps = Vec::with_capacity(robots.len());
        for robot in &robots {
            if robot.modes.is_empty() {
                return Err(EncodingError::NoModes(robot.id.clone()));
            }
            let mut seen = HashMap::new();
            for (k, mode) in robot.modes.iter().enumerate() {
                if seen.insert(mode.clone(), k).is_some() {
                    return Err(EncodingError::DuplicateMode {
                        robot: robot.id.clone(),
                        mode: mode.clone(),
                    });
                }
            }
            mode_maps.push(seen);
        }

        let mut mode_features = Vec::new();
        for (robot, mode, feature) in mode_feature_edges {
            let i = lookup(&robot_map, "robot", robot)?;
            let k = lookup(&mode_maps[i], "mode", mode)?;
            let f = lookup(&feature_map, "feature", feature)?;
            mode_features.push((i, k, f));
        }
        let mut feature_capabilities = Vec::new();
        for (feature, capability) in feature_capability_edges {
            feature_capabilities.push((
                lookup(&feature_map, "feature", feature)?,
                lookup(&capability_map, "capability", capability)?,
            ));
        }
        let mut task_capabilities = Vec::new();
        for (task, capability) in task_capability_edges {
            task_capabilities.push((
                lookup(&task_map, "task", task)?,
                lookup(&capability_map, "capability", capability)?,
            ));
        }

        Ok(Self {
            robots,
            features,
            capabilities,
            tasks,
            mode_features,
            feature_capabilities,
            task_capabilities,
        })
    }

    pub fn robots(&self) -> &[RobotSpec] {
        &self.robots
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn capabilities(&self) -> &[String] {
        &self.capabilities
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_capabilities(&self) -> usize {
        self.capabilities.len()
    }

    /// Returns a copy of the graph with one more feature-capability edge.
    pub fn with_feature_capability(&self, feature: usize, capability: usize) -> Self {
        let mut out = self.clone();
        if !out.feature_capabilities.contains(&(feature, capability)) {
            out.feature_capabilities.push((feature, capability));
        }
        out
    }
}

/// The bijection between `(robot, mode)` pairs and virtual robot indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeIndex {
    pairs: Vec<(usize, usize)>,
    forward: HashMap<(usize, usize), usize>,
    robot_start: Vec<usize>,
}

impl ModeIndex {
    /// Builds the index directly from per-robot mode counts.
    pub fn from_mode_counts(counts: &[usize]) -> Result<Self, EncodingError> {
        let mut pairs = Vec::new();
        let mut robot_start = Vec::with_capacity(counts.len() + 1);
        for (i, &m) in counts.iter().enumerate() {
            if m == 0 {
                return Err(EncodingError::NoModes(format!("#{i}")));
            }
            robot_start.push(pairs.len());
            pairs.extend((0..m).map(|k| (i, k)));
        }
        robot_start.push(pairs.len());
        let forward = pairs.iter().enumerate().map(|(v, &p)| (p, v)).collect();
        Ok(Self {
            pairs,
            forward,
            robot_start,
        })
    }

    pub fn n_vr(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_robots(&self) -> usize {
        self.robot_start.len() - 1
    }

    pub fn n_modes(&self, robot: usize) -> usize {
        self.robot_start[robot + 1] - self.robot_start[robot]
    }

    pub fn forward(&self, robot: usize, mode: usize) -> Option<usize> {
        self.forward.get(&(robot, mode)).copied()
    }

    pub fn inverse(&self, v: usize) -> Option<(usize, usize)> {
        self.pairs.get(v).copied()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Virtual robots belonging to `robot`, in mode order.
    pub fn virtual_robots(&self, robot: usize) -> std::ops::Range<usize> {
        self.robot_start[robot]..self.robot_start[robot + 1]
    }
}

pub fn build_mode_index(graph: &EncodingGraph) -> Result<ModeIndex, EncodingError> {
    let counts: Vec<usize> = graph.robots.iter().map(|r| r.modes.len()).collect();
    for r in &graph.robots {
        let distinct: HashSet<&String> = r.modes.iter().collect();
        if distinct.len() != r.modes.len() {
            let dup = r
                .modes
                .iter()
                .find(|m| r.modes.iter().filter(|n| n == m).count() > 1)
                .unwrap();
            return Err(EncodingError::DuplicateMode {
                robot: r.id.clone(),
                mode: dup.clone(),
            });
        }
    }
    ModeIndex::from_mode_counts(&counts)
}

/// Dense row-major 0/1 matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.data[r * self.cols + c] = u8::from(value);
    }

    pub fn column(&self, c: usize) -> Vec<u8> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `F` (capabilities x virtual robots) and `T` (tasks x capabilities).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingMatrices {
    pub f: BinaryMatrix,
    pub t: BinaryMatrix,
}

pub fn mapping_matrices(graph: &EncodingGraph, idx: &ModeIndex) -> MappingMatrices {
    let mut f = BinaryMatrix::zeros(graph.n_capabilities(), idx.n_vr());
    for &(i, k, feature) in &graph.mode_features {
        let Some(v) = idx.forward(i, k) else { continue };
        for &(fe, cap) in &graph.feature_capabilities {
            if fe == feature {
                f.set(cap, v, true);
            }
        }
    }
    let mut t = BinaryMatrix::zeros(graph.n_tasks(), graph.n_capabilities());
    for &(task, cap) in &graph.task_capabilities {
        t.set(task, cap, true);
    }
    MappingMatrices { f, t }
}

/// Diagonals of the specialization matrices `S_v` and penalty matrices `Pi_v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecializationSet {
    /// `s[v][j] == 1` iff task `j` is a candidate for virtual robot `v`.
    pub s: Vec<Vec<u8>>,
    pub pi: Vec<Vec<u8>>,
}

impl SpecializationSet {
    pub fn from_s(s: Vec<Vec<u8>>) -> Self {
        let pi = s.iter().map(|col| col.iter().map(|&x| 1 - x).collect()).collect();
        Self { s, pi }
    }

    pub fn n_vr(&self) -> usize {
        self.s.len()
    }
}

/// `s_j = 1 - kron((T F_v)_j)`: a task is a candidate when at least one of
/// its required capabilities is available to the virtual robot.
pub fn specialization_and_penalty(maps: &MappingMatrices) -> SpecializationSet {
    let n_t = maps.t.rows();
    let n_c = maps.t.cols();
    let s = (0..maps.f.cols())
        .map(|v| {
            (0..n_t)
                .map(|j| {
                    let count: u32 = (0..n_c)
                        .map(|l| u32::from(maps.t.get(j, l)) * u32::from(maps.f.get(l, v)))
                        .sum();
                    u8::from(count != 0)
                })
                .collect()
        })
        .collect();
    SpecializationSet::from_s(s)
}

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Region {
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Prohibits the listed mode ids inside `region`.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub name: String,
    pub region: Region,
    pub modes: Vec<String>,
}

/// Zeroes `s` for every virtual robot whose robot is inside a restricted
/// region while using a restricted mode.
pub fn apply_region_restriction(
    spec: &SpecializationSet,
    restrictions: &[Restriction],
    graph: &EncodingGraph,
    idx: &ModeIndex,
    positions: &[Vector2<f64>],
) -> SpecializationSet {
    let mut s = spec.s.clone();
    for r in restrictions {
        for (v, &(i, k)) in idx.pairs().iter().enumerate() {
            let mode = &graph.robots[i].modes[k];
            if r.modes.iter().any(|m| m == mode) && r.region.contains(&positions[i]) {
                s[v].iter_mut().for_each(|x| *x = 0);
            }
        }
    }
    SpecializationSet::from_s(s)
}
