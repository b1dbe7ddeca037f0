//! Virtual-robot indexing, mapping matrices and the specialization of a
//! convertible UAV next to a ground robot.

use multimode_alloc::encoding::{
    apply_region_restriction, build_mode_index, mapping_matrices, specialization_and_penalty, EncodingGraph, Region,
    Restriction, RobotSpec,
};
use nalgebra::Vector2;

fn s(v: &str) -> String {
    v.to_string()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = EncodingGraph::new(
        vec![
            RobotSpec {
                id: s("uav"),
                modes: vec![s("cruise"), s("hover")],
            },
            RobotSpec {
                id: s("rover"),
                modes: vec![s("drive")],
            },
        ],
        vec![s("wing"), s("propeller"), s("wheels")],
        vec![s("flying"), s("driving")],
        vec![s("survey"), s("deliver")],
        &[
            (s("uav"), s("cruise"), s("wing")),
            (s("uav"), s("hover"), s("propeller")),
            (s("rover"), s("drive"), s("wheels")),
        ],
        &[
            (s("wing"), s("flying")),
            (s("propeller"), s("flying")),
            (s("wheels"), s("driving")),
        ],
        &[(s("survey"), s("flying")), (s("deliver"), s("driving"))],
    )?;

    let idx = build_mode_index(&graph)?;
    for (v, &(i, k)) in idx.pairs().iter().enumerate() {
        println!("mu({}, {}) = {v}", graph.robots()[i].id, graph.robots()[i].modes[k]);
    }

    let maps = mapping_matrices(&graph, &idx);
    println!("\nF (capabilities x virtual robots):");
    for r in 0..maps.f.rows() {
        println!("  {:8} {:?}", graph.capabilities()[r], maps.f.row(r));
    }
    println!("T (tasks x capabilities):");
    for r in 0..maps.t.rows() {
        println!("  {:8} {:?}", graph.tasks()[r], maps.t.row(r));
    }

    let spec = specialization_and_penalty(&maps);
    println!("\nvirtual robot: s, pi");
    for v in 0..spec.n_vr() {
        println!("  {v}: {:?} {:?}", spec.s[v], spec.pi[v]);
    }

    let band = Restriction {
        name: s("no_cruise"),
        region: Region {
            min: Vector2::new(-10.0, 1.5),
            max: Vector2::new(10.0, 2.5),
        },
        modes: vec![s("cruise")],
    };
    let positions = [Vector2::new(0.0, 2.0), Vector2::new(3.0, 0.0)];
    let restricted = apply_region_restriction(&spec, &[band], &graph, &idx, &positions);
    println!("\ninside the no-cruise band:");
    for v in 0..restricted.n_vr() {
        println!("  {v}: {:?} {:?}", restricted.s[v], restricted.pi[v]);
    }
    Ok(())
}
