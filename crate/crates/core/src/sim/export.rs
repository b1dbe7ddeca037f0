//! CSV export of traces and the matching reader.
//!
//! Files written to the output directory:
//!
//! | file | columns |
//! |------|---------|
//! | `trajectory_<robot>.csv` | `t, x, y, vx, vy, theta, mode, task, u1, u2, energy` |
//! | `allocation.csv` | `t, status, cost, nodes, max_kkt`, then `alpha[<robot>/<mode>/<task>]` per pair, then `delta[...]` in the same order |
//! | `tasks.csv` | `t`, then `h[<task>]` per task |
//! | `certificates.csv` | `t, proposition, tau1, tau2, tau3, margin, feasible` |
//! | `final_state.csv` | `robot, t, x, y, vx, vy, theta` |
//! | `trace.toml` | identifiers, `dt`, final time and abort message |
//! | `summary.txt` | completion times, energy per robot, final distances |
//!
//! `mode` and `task` are empty for an unassigned robot. Floats are written in
//! shortest round-trip form, so [`read_trace`] reproduces the trace exactly.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::SolveStatus;
use crate::convergence::Proposition;
use crate::dynamics::UavState;

use super::engine::{CertificateSample, RobotRecord, StepRecord, Trace};
use super::scenario::Scenario;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    scenario: String,
    dt: f64,
    final_t: f64,
    aborted: Option<String>,
    robots: Vec<MetaRobot>,
    tasks: Vec<String>,
    vrs: Vec<MetaVr>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaRobot {
    id: String,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaVr {
    robot: usize,
    mode: String,
}

pub const TRAJECTORY_HEADER: [&str; 11] = ["t", "x", "y", "vx", "vy", "theta", "mode", "task", "u1", "u2", "energy"];
pub const CERTIFICATE_HEADER: [&str; 7] = ["t", "proposition", "tau1", "tau2", "tau3", "margin", "feasible"];
pub const FINAL_HEADER: [&str; 7] = ["robot", "t", "x", "y", "vx", "vy", "theta"];

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// File name of robot `i`'s trajectory.
pub fn trajectory_file(trace: &Trace, i: usize) -> String {
    let base = sanitize(&trace.robots[i]);
    let clash = trace
        .robots
        .iter()
        .enumerate()
        .any(|(k, r)| k != i && sanitize(r) == base);
    if clash {
        format!("trajectory_{i}_{base}.csv")
    } else {
        format!("trajectory_{base}.csv")
    }
}

fn pair_labels(trace: &Trace) -> Vec<String> {
    trace
        .vrs
        .iter()
        .flat_map(|(r, m)| trace.tasks.iter().map(move |t| format!("{}/{m}/{t}", trace.robots[*r])))
        .collect()
}

fn f(v: f64) -> String {
    format!("{v}")
}

struct Csv {
    path: PathBuf,
    w: csv::Writer<File>,
}

impl Csv {
    fn create(dir: &Path, name: &str) -> Result<Self, ExportError> {
        let path = dir.join(name);
        let w = csv::Writer::from_path(&path).map_err(|source| ExportError::Csv {
            path: path.clone(),
            source,
        })?;
        Ok(Self { path, w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<(), ExportError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|source| ExportError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    fn finish(mut self) -> Result<(), ExportError> {
        self.w.flush().map_err(|source| ExportError::Io {
            path: self.path,
            source,
        })
    }
}

/// Writes every trace file into `dir`, creating it if needed.
pub fn export_traces(trace: &Trace, scenario: Option<&Scenario>, dir: impl AsRef<Path>) -> Result<(), ExportError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| ExportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    for i in 0..trace.robots.len() {
        let mut c = Csv::create(dir, &trajectory_file(trace, i))?;
        c.row(TRAJECTORY_HEADER)?;
        for r in &trace.records {
            let rr = &r.robots[i];
            let s = rr.state.to_array();
            c.row([
                f(r.t),
                f(s[0]),
                f(s[1]),
                f(s[2]),
                f(s[3]),
                f(s[4]),
                trace.mode_name(rr.vr).to_string(),
                rr.task.map_or(String::new(), |j| trace.tasks[j].clone()),
                f(rr.u[0]),
                f(rr.u[1]),
                f(rr.energy),
            ])?;
        }
        c.finish()?;
    }

    let labels = pair_labels(trace);
    let mut c = Csv::create(dir, "allocation.csv")?;
    let mut header: Vec<String> = ["t", "status", "cost", "nodes", "max_kkt"].map(String::from).to_vec();
    header.extend(labels.iter().map(|l| format!("alpha[{l}]")));
    header.extend(labels.iter().map(|l| format!("delta[{l}]")));
    c.row(&header)?;
    for r in &trace.records {
        let mut row = vec![
            f(r.t),
            r.status.as_str().to_string(),
            f(r.cost),
            r.nodes.to_string(),
            f(r.max_kkt),
        ];
        row.extend(r.alpha.iter().map(|a| a.to_string()));
        row.extend(r.delta.iter().map(|d| f(*d)));
        c.row(&row)?;
    }
    c.finish()?;

    let mut c = Csv::create(dir, "tasks.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend(trace.tasks.iter().map(|t| format!("h[{t}]")));
    c.row(&header)?;
    for r in &trace.records {
        let mut row = vec![f(r.t)];
        row.extend(r.task_h.iter().map(|h| f(*h)));
        c.row(&row)?;
    }
    c.finish()?;

    let mut c = Csv::create(dir, "certificates.csv")?;
    c.row(CERTIFICATE_HEADER)?;
    for r in &trace.records {
        if let Some(s) = &r.certificate {
            c.row([
                f(r.t),
                s.which.as_str().to_string(),
                f(s.tau[0]),
                f(s.tau[1]),
                f(s.tau[2]),
                f(s.margin),
                s.feasible.to_string(),
            ])?;
        }
    }
    c.finish()?;

    let mut c = Csv::create(dir, "final_state.csv")?;
    c.row(FINAL_HEADER)?;
    for (id, s) in trace.robots.iter().zip(&trace.final_states) {
        let a = s.to_array();
        c.row([
            id.clone(),
            f(trace.final_t),
            f(a[0]),
            f(a[1]),
            f(a[2]),
            f(a[3]),
            f(a[4]),
        ])?;
    }
    c.finish()?;

    let meta = Meta {
        scenario: trace.scenario.clone(),
        dt: trace.dt,
        final_t: trace.final_t,
        aborted: trace.aborted.clone(),
        robots: (0..trace.robots.len())
            .map(|i| MetaRobot {
                id: trace.robots[i].clone(),
                file: trajectory_file(trace, i),
            })
            .collect(),
        tasks: trace.tasks.clone(),
        vrs: trace
            .vrs
            .iter()
            .map(|(r, m)| MetaVr {
                robot: *r,
                mode: m.clone(),
            })
            .collect(),
    };
    let text = toml::to_string(&meta).map_err(|e| ExportError::Format {
        path: dir.join("trace.toml"),
        msg: e.to_string(),
    })?;
    write_text(&dir.join("trace.toml"), &text)?;
    write_text(&dir.join("summary.txt"), &summary(trace, scenario))
}

fn write_text(path: &Path, text: &str) -> Result<(), ExportError> {
    File::create(path)
        .and_then(|mut file| file.write_all(text.as_bytes()))
        .map_err(|source| ExportError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Human-readable run summary. Final distances need the task targets.
pub fn summary(trace: &Trace, scenario: Option<&Scenario>) -> String {
    let radius = scenario.map_or(0.05, |s| s.params.completion_radius);
    let mut out = String::new();
    out.push_str(&format!("scenario: {}\n", trace.scenario));
    out.push_str(&format!("steps: {}\n", trace.records.len()));
    out.push_str(&format!("dt: {}\n", trace.dt));
    out.push_str(&format!("final time: {}\n", trace.final_t));
    match &trace.aborted {
        Some(msg) => out.push_str(&format!("status: aborted ({msg})\n")),
        None => out.push_str("status: completed\n"),
    }
    out.push_str(&format!("\ntask completion (radius {radius}):\n"));
    for (t, c) in trace.tasks.iter().zip(trace.completion_times(radius)) {
        match c {
            Some(c) => out.push_str(&format!("  {t}: {c:.2} s\n")),
            None => out.push_str(&format!("  {t}: not completed\n")),
        }
    }
    out.push_str("\nenergy per robot (integral of eps dt):\n");
    for (r, e) in trace.robots.iter().zip(trace.total_energy()) {
        out.push_str(&format!("  {r}: {e:.6}\n"));
    }
    if let Some(s) = scenario {
        out.push_str("\nfinal distance to target:\n");
        for (t, d) in trace.tasks.iter().zip(trace.final_distances(s)) {
            out.push_str(&format!("  {t}: {d:.6} m\n"));
        }
    }
    out
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), ExportError> {
    let csv_err = |source| ExportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

struct Parser<'a> {
    path: &'a Path,
}

impl Parser<'_> {
    fn bad(&self, msg: impl Into<String>) -> ExportError {
        ExportError::Format {
            path: self.path.to_path_buf(),
            msg: msg.into(),
        }
    }

    fn f64(&self, s: &str) -> Result<f64, ExportError> {
        s.parse().map_err(|_| self.bad(format!("not a number: `{s}`")))
    }

    fn usize(&self, s: &str) -> Result<usize, ExportError> {
        s.parse().map_err(|_| self.bad(format!("not an integer: `{s}`")))
    }

    fn width(&self, rows: &[Vec<String>], n: usize) -> Result<(), ExportError> {
        match rows.iter().position(|r| r.len() != n) {
            Some(k) => Err(self.bad(format!("row {} has {} fields, expected {n}", k + 1, rows[k].len()))),
            None => Ok(()),
        }
    }
}

fn parse_status(s: &str) -> Option<SolveStatus> {
    [SolveStatus::Optimal, SolveStatus::NodeLimit, SolveStatus::Infeasible]
        .into_iter()
        .find(|k| k.as_str() == s)
}

/// Reads a directory written by [`export_traces`].
pub fn read_trace(dir: impl AsRef<Path>) -> Result<Trace, ExportError> {
    let dir = dir.as_ref();
    let meta_path = dir.join("trace.toml");
    let text = std::fs::read_to_string(&meta_path).map_err(|source| ExportError::Io {
        path: meta_path.clone(),
        source,
    })?;
    let meta: Meta = toml::from_str(&text).map_err(|e| ExportError::Format {
        path: meta_path,
        msg: e.to_string(),
    })?;
    let n_r = meta.robots.len();
    let n_t = meta.tasks.len();
    let n_pairs = meta.vrs.len() * n_t;

    let path = dir.join("allocation.csv");
    let p = Parser { path: &path };
    let (_, alloc) = read_rows(&path)?;
    p.width(&alloc, 5 + 2 * n_pairs)?;
    let mut records = Vec::with_capacity(alloc.len());
    for (step, row) in alloc.iter().enumerate() {
        let alpha = row[5..5 + n_pairs]
            .iter()
            .map(|a| match a.as_str() {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(p.bad(format!("alpha entry `{a}`"))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        records.push(StepRecord {
            step,
            t: p.f64(&row[0])?,
            robots: Vec::with_capacity(n_r),
            task_h: Vec::new(),
            alpha,
            delta: row[5 + n_pairs..].iter().map(|d| p.f64(d)).collect::<Result<_, _>>()?,
            cost: p.f64(&row[2])?,
            status: parse_status(&row[1]).ok_or_else(|| p.bad(format!("status `{}`", row[1])))?,
            nodes: p.usize(&row[3])?,
            max_kkt: p.f64(&row[4])?,
            certificate: None,
        });
    }

    for (i, robot) in meta.robots.iter().enumerate() {
        let path = dir.join(&robot.file);
        let p = Parser { path: &path };
        let (_, rows) = read_rows(&path)?;
        p.width(&rows, TRAJECTORY_HEADER.len())?;
        if rows.len() != records.len() {
            return Err(p.bad(format!("{} rows, allocation has {}", rows.len(), records.len())));
        }
        for (rec, row) in records.iter_mut().zip(&rows) {
            let mut a = [0.0; 5];
            for (k, v) in a.iter_mut().enumerate() {
                *v = p.f64(&row[1 + k])?;
            }
            let vr = if row[6].is_empty() {
                None
            } else {
                let v = meta.vrs.iter().position(|m| m.robot == i && m.mode == row[6]);
                Some(v.ok_or_else(|| p.bad(format!("unknown mode `{}`", row[6])))?)
            };
            let task = if row[7].is_empty() {
                None
            } else {
                let j = meta.tasks.iter().position(|t| *t == row[7]);
                Some(j.ok_or_else(|| p.bad(format!("unknown task `{}`", row[7])))?)
            };
            rec.robots.push(RobotRecord {
                state: UavState::from_array(&a),
                vr,
                task,
                u: [p.f64(&row[8])?, p.f64(&row[9])?],
                energy: p.f64(&row[10])?,
            });
        }
    }

    let path = dir.join("tasks.csv");
    let p = Parser { path: &path };
    let (_, rows) = read_rows(&path)?;
    p.width(&rows, 1 + n_t)?;
    if rows.len() != records.len() {
        return Err(p.bad(format!("{} rows, allocation has {}", rows.len(), records.len())));
    }
    for (rec, row) in records.iter_mut().zip(&rows) {
        rec.task_h = row[1..].iter().map(|h| p.f64(h)).collect::<Result<_, _>>()?;
    }

    let path = dir.join("certificates.csv");
    let p = Parser { path: &path };
    let (_, rows) = read_rows(&path)?;
    p.width(&rows, CERTIFICATE_HEADER.len())?;
    for row in &rows {
        let t = p.f64(&row[0])?;
        let rec = records
            .iter_mut()
            .find(|r| r.t == t)
            .ok_or_else(|| p.bad(format!("no record at t = {t}")))?;
        let which = match row[1].as_str() {
            "first" => Proposition::First,
            "second" => Proposition::Second,
            other => return Err(p.bad(format!("proposition `{other}`"))),
        };
        rec.certificate = Some(CertificateSample {
            which,
            tau: [p.f64(&row[2])?, p.f64(&row[3])?, p.f64(&row[4])?],
            margin: p.f64(&row[5])?,
            feasible: row[6].parse().map_err(|_| p.bad(format!("feasible `{}`", row[6])))?,
        });
    }

    let path = dir.join("final_state.csv");
    let p = Parser { path: &path };
    let (_, rows) = read_rows(&path)?;
    p.width(&rows, FINAL_HEADER.len())?;
    if rows.len() != n_r {
        return Err(p.bad(format!("{} rows, expected {n_r}", rows.len())));
    }
    let mut final_states = Vec::with_capacity(n_r);
    for row in &rows {
        let mut a = [0.0; 5];
        for (k, v) in a.iter_mut().enumerate() {
            *v = p.f64(&row[2 + k])?;
        }
        final_states.push(UavState::from_array(&a));
    }

    Ok(Trace {
        scenario: meta.scenario,
        robots: meta.robots.into_iter().map(|r| r.id).collect(),
        tasks: meta.tasks,
        vrs: meta.vrs.into_iter().map(|v| (v.robot, v.mode)).collect(),
        dt: meta.dt,
        records,
        final_t: meta.final_t,
        final_states,
        aborted: meta.aborted,
    })
}
