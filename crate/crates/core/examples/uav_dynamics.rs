//! Integrates a convertible UAV in each mode and reports the energy of the
//! applied inputs.

use multimode_alloc::dynamics::{energy_cost, step_robot, ModeSpec, UavState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k_v = 4.0;
    let dt = 0.01;
    let cases = [
        (
            ModeSpec::cruise(2.0),
            [2.0, 0.5],
            "cruise at 2 m/s turning at 0.5 rad/s",
        ),
        (ModeSpec::hover(), [0.0, 1.0], "hover drifting sideways"),
    ];
    for (mode, u, label) in cases {
        let mut s = UavState::new([0.0, 0.0], [1.0, 0.0, 0.0]);
        let (energy, _) = energy_cost(&mode, &u)?;
        for _ in 0..200 {
            s = step_robot(&s, Some((&mode, &u)), k_v, dt)?;
        }
        println!("{label}: energy rate {energy:.3}");
        println!(
            "  after 2 s: x = ({:.3}, {:.3}), v = ({:.3}, {:.3}), theta = {:.3}",
            s.x[0], s.x[1], s.eta[0], s.eta[1], s.eta[2]
        );
    }

    let mut s = UavState::new([0.0, 0.0], [2.0, 0.0, 0.0]);
    for _ in 0..100 {
        s = step_robot(&s, None, k_v, dt)?;
    }
    println!("no input for 1 s: speed {:.4} m/s", s.velocity().norm());
    Ok(())
}
