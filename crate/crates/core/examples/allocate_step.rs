//! Builds one allocation program from a scenario and solves it by
//! branch-and-bound and by exhaustive enumeration.

use multimode_alloc::allocator::{enumerate_exhaustive, solve_allocation, BnbOptions};
use multimode_alloc::sim::{build_problem, load_scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/band_mud.toml");
    let scenario = load_scenario(path)?;
    let states = scenario.initial_states();
    let problem = build_problem(&scenario, &states)?;
    println!(
        "{} variables, {} barrier rows, {} cardinality rows",
        problem.layout.n_vars(),
        problem.cbf_rows.len(),
        problem.cardinality.len()
    );

    let bnb = solve_allocation(&problem, &BnbOptions::default())?;
    let exhaustive = enumerate_exhaustive(&problem)?;
    println!(
        "branch-and-bound: cost {:.6}, {} nodes, kkt {:.1e}",
        bnb.cost, bnb.nodes, bnb.max_kkt
    );
    println!("enumeration:      cost {:.6}", exhaustive.cost);
    for (v, j) in bnb.assignments(scenario.tasks.len()) {
        let (i, k) = scenario.index.inverse(v).expect("valid virtual robot");
        let u = &bnb.u[v];
        println!(
            "  {} in {} -> {}, u = [{:.3}, {:.3}]",
            scenario.robots[i].id, scenario.robots[i].modes[k].id, scenario.tasks[j].id, u[0], u[1]
        );
    }
    assert_eq!(bnb.alpha, exhaustive.alpha);
    Ok(())
}
