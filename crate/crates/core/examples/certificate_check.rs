//! Grid search for the convergence certificate at the start of the
//! single-UAV scenario.

use multimode_alloc::allocator::{solve_allocation, BnbOptions};
use multimode_alloc::convergence::{
    assemble_certificate_matrices, certificate_search, psd_margin, CertificateInputs, PhiLayout,
};
use multimode_alloc::sim::{build_problem, load_scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/single_uav.toml");
    let scenario = load_scenario(path)?;
    let states = scenario.initial_states();
    let problem = build_problem(&scenario, &states)?;
    let solution = solve_allocation(&problem, &BnbOptions::default())?;
    let modes = scenario.vr_modes();
    let inp = CertificateInputs {
        problem: &problem,
        states: &states,
        modes: &modes,
        tasks: &scenario.tasks,
        alpha: &solution.alpha,
        k_v: scenario.params.k_v,
    };
    let which = inp.proposition();
    let mats = assemble_certificate_matrices(&inp, PhiLayout::for_problem(&problem)?, scenario.params.scalars)?;
    println!("phi has {} entries, proposition {}", mats.layout.dim(), which.as_str());
    println!("smallest eigenvalue of -B0': {:.4e}", psd_margin(&-mats.lhs(which))?);

    let report = certificate_search(&mats, which, &scenario.params.tau_grid, scenario.params.cert_tol)?;
    println!(
        "best tau = [{:.3e}, {:.3e}, {:.3e}] over {} points: margin {:.4e}, feasible {}",
        report.tau[0], report.tau[1], report.tau[2], report.evaluated, report.margin, report.feasible
    );
    Ok(())
}
