use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use multimode_alloc::sim::{
    certify, export_traces, load_scenario, run_simulation, simulation_step, summary, RunOptions, Scenario,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "multimode-sim",
    version,
    about = "Simulate mode-switching multi-robot task allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV traces.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Evaluate the convergence certificate while running.
        #[arg(long)]
        check_certificates: bool,
        #[arg(long, default_value_t = 1.0)]
        cert_sample_hz: f64,
    },
    /// Load and validate a scenario.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Certificate report at one time instant.
    Certify {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        at: f64,
    },
}

fn load(path: &PathBuf) -> Result<Scenario, ExitCode> {
    load_scenario(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_VALIDATION })
    })
}

fn simulate(
    scenario: PathBuf,
    out: PathBuf,
    dt: Option<f64>,
    t_end: Option<f64>,
    opts: RunOptions,
) -> Result<(), ExitCode> {
    let mut s = load(&scenario)?;
    if let Some(dt) = dt {
        s.params.dt = dt;
    }
    if let Some(t) = t_end {
        s.params.t_end = t;
    }
    if !(s.params.dt > 0.0 && s.params.dt.is_finite()) || !(s.params.t_end >= s.params.dt) {
        eprintln!(
            "error: need dt > 0 and t_end >= dt (dt = {}, t_end = {})",
            s.params.dt, s.params.t_end
        );
        return Err(ExitCode::from(EXIT_VALIDATION));
    }
    let trace = run_simulation(&s, &opts);
    if let Err(e) = export_traces(&trace, Some(&s), &out) {
        eprintln!("error: {e}");
        return Err(ExitCode::from(EXIT_IO));
    }
    print!("{}", summary(&trace, Some(&s)));
    if let Some(msg) = &trace.aborted {
        eprintln!("error: {msg}");
        return Err(ExitCode::from(EXIT_INFEASIBLE));
    }
    Ok(())
}

fn validate(scenario: PathBuf) -> Result<(), ExitCode> {
    let s = load(&scenario)?;
    println!(
        "{}: {} robots, {} virtual robots, {} tasks, {} restrictions",
        s.name,
        s.robots.len(),
        s.index.n_vr(),
        s.tasks.len(),
        s.restrictions.len()
    );
    Ok(())
}

fn certify_at(scenario: PathBuf, at: f64) -> Result<(), ExitCode> {
    let mut s = load(&scenario)?;
    if !(at >= 0.0 && at.is_finite()) {
        eprintln!("error: --at must be a non-negative time");
        return Err(ExitCode::from(EXIT_VALIDATION));
    }
    s.params.t_end = at;
    let trace = run_simulation(&s, &RunOptions::default());
    if let Some(msg) = &trace.aborted {
        eprintln!("error: {msg}");
        return Err(ExitCode::from(EXIT_INFEASIBLE));
    }
    let step = trace.records.len();
    let previous = None;
    let out = simulation_step(&s, step, &trace.final_states, previous).map_err(|f| {
        eprintln!("error: {}", f.error);
        ExitCode::from(EXIT_INFEASIBLE)
    })?;
    let sample = certify(&s, &out.problem, &trace.final_states, &out.solution.alpha).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_VALIDATION)
    })?;
    println!("t: {}", out.record.t);
    for (i, r) in out.record.robots.iter().enumerate() {
        let mode = r.vr.map_or("-", |v| {
            s.robots[i].modes[s.index.inverse(v).expect("valid vr").1].id.as_str()
        });
        let task = r.task.map_or("-", |j| s.tasks[j].id.as_str());
        println!("robot {}: mode {mode}, task {task}", s.robots[i].id);
    }
    println!("proposition: {}", sample.which.as_str());
    println!("tau: [{}, {}, {}]", sample.tau[0], sample.tau[1], sample.tau[2]);
    println!("margin: {:e}", sample.margin);
    println!("feasible: {}", sample.feasible);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate {
            scenario,
            out,
            dt,
            t_end,
            check_certificates,
            cert_sample_hz,
        } => simulate(
            scenario,
            out,
            dt,
            t_end,
            RunOptions {
                check_certificates,
                cert_sample_hz,
            },
        ),
        Command::Validate { scenario } => validate(scenario),
        Command::Certify { scenario, at } => certify_at(scenario, at),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
