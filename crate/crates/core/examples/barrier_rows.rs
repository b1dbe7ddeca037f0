//! Barrier constraint rows for a kinematic robot and for a UAV whose input
//! only reaches the position through its velocity state.

use multimode_alloc::cbf::{
    high_rel_degree_row, integral_h_prime, kinematic_row, task_h, CbfError, SlackIndex, TaskSpec,
};
use multimode_alloc::dynamics::{ModeSpec, UavState};
use nalgebra::DMatrix;

fn main() -> Result<(), CbfError> {
    let task = TaskSpec::reach("goal", [3.0, 1.0]);
    let slack = SlackIndex { vr: 0, task: 0 };
    let state = UavState::new([0.0, 0.0], [1.5, 0.0, 0.3]);

    let walker = ModeSpec::velocity("walk");
    let (h, grad) = task_h(&task, &state.x);
    let g = DMatrix::identity(2, 2);
    let row = kinematic_row(slack, h, &grad, &walker.position_drift(&state), &g, task.gamma1)?;
    println!("kinematic: h = {h:.3}, a = {:?}, b = {:.3}", row.a, row.b);

    let cruise = ModeSpec::cruise(2.0);
    let zero = DMatrix::from_column_slice(2, 2, cruise.position_input_matrix().as_slice());
    match kinematic_row(slack, h, &grad, &cruise.position_drift(&state), &zero, task.gamma1) {
        Err(CbfError::HighRelativeDegree) => println!("cruise: input absent from dh/dt, using the cascaded barrier"),
        other => println!("cruise: unexpected {other:?}"),
    }

    let hp = integral_h_prime(&task, &state);
    println!("h' = {:.3}", hp.value);
    for mode in [ModeSpec::cruise(2.0), ModeSpec::hover()] {
        let row = high_rel_degree_row(slack, &task, &state, &mode, 4.0);
        println!("{}: a = [{:.3}, {:.3}], b = {:.3}", mode.id, row.a[0], row.a[1], row.b);
    }
    Ok(())
}
