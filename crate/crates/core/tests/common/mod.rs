#![allow(dead_code)]

use multimode_alloc::allocator::{assemble_miqp, AllocationParams, AssemblyInputs, MiqpProblem};
use multimode_alloc::cbf::{CbfRow, SlackIndex, TaskSpec};
use multimode_alloc::dynamics::{EnergyParams, ModeKind, ModeSpec};
use multimode_alloc::encoding::{specialization_and_penalty, BinaryMatrix, MappingMatrices, ModeIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random allocation program with `n_t * n_vr <= max_pairs`.
pub fn random_problem(rng: &mut ChaCha8Rng, max_pairs: usize) -> MiqpProblem {
    loop {
        let n_r = rng.gen_range(1..=3);
        let counts: Vec<usize> = (0..n_r).map(|_| rng.gen_range(1..=2)).collect();
        let n_vr: usize = counts.iter().sum();
        let n_t = rng.gen_range(1..=2);
        if n_t * n_vr > max_pairs {
            continue;
        }
        let idx = ModeIndex::from_mode_counts(&counts).unwrap();
        let n_c = rng.gen_range(1..=3);
        let mut f = BinaryMatrix::zeros(n_c, n_vr);
        let mut t = BinaryMatrix::zeros(n_t, n_c);
        for l in 0..n_c {
            for v in 0..n_vr {
                f.set(l, v, rng.gen_bool(0.5));
            }
            for j in 0..n_t {
                t.set(j, l, rng.gen_bool(0.3));
            }
        }
        let maps = MappingMatrices { f, t };
        let spec = specialization_and_penalty(&maps);
        let modes: Vec<ModeSpec> = (0..n_vr)
            .map(|v| {
                let energy = EnergyParams {
                    weights: vec![rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
                    u_eff: vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                };
                ModeSpec::new(format!("m{v}"), ModeKind::Velocity, energy).unwrap()
            })
            .collect();
        let mode_refs: Vec<&ModeSpec> = modes.iter().collect();
        let tasks: Vec<TaskSpec> = (0..n_t)
            .map(|j| {
                let mut task = TaskSpec::reach(format!("t{j}"), [0.0, 0.0]);
                task.n_min = rng.gen_range(0..=1);
                task.n_max = task.n_min + rng.gen_range(0..=1);
                task
            })
            .collect();
        let mut rows = Vec::new();
        for v in 0..n_vr {
            for j in 0..n_t {
                rows.push(CbfRow {
                    slack: SlackIndex { vr: v, task: j },
                    a: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    b: rng.gen_range(-2.0..2.0),
                });
            }
        }
        let params = AllocationParams {
            l1: [1.0, 10.0, 1e6][rng.gen_range(0..3)],
            l2: [1e-4, 1.0][rng.gen_range(0..2)],
            kappa: 1e4,
            delta_max: [1.0, 3.0, 1e4][rng.gen_range(0..3)],
        };
        return assemble_miqp(AssemblyInputs {
            index: &idx,
            modes: &mode_refs,
            maps: &maps,
            spec: &spec,
            tasks: &tasks,
            cbf_rows: rows,
            params,
        })
        .unwrap();
    }
}

pub fn costs_agree(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}
