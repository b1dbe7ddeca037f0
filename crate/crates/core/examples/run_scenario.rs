//! Runs a scenario file and writes the CSV traces.
//!
//! ```text
//! cargo run --release --example run_scenario -- scenarios/single_uav.toml out/
//! ```

use multimode_alloc::sim::{export_traces, load_scenario, run_simulation, summary, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/single_uav.toml").into());
    let out = args.next().unwrap_or_else(|| "trace_out".into());
    let scenario = load_scenario(&path)?;
    let trace = run_simulation(&scenario, &RunOptions::default());
    export_traces(&trace, Some(&scenario), &out)?;
    print!("{}", summary(&trace, Some(&scenario)));

    let mut last = None;
    for r in &trace.records {
        let modes: Vec<&str> = r.robots.iter().map(|rr| trace.mode_name(rr.vr)).collect();
        if last.as_ref() != Some(&modes) {
            println!("t = {:5.2}: {:?}", r.t, modes);
            last = Some(modes);
        }
    }
    println!("traces written to {out}");
    Ok(())
}
