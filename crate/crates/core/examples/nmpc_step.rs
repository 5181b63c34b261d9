//! Solves the position MPC for a one metre step and flies it closed loop.

use nalgebra::Vector3;
use thirdview::dynamics::{step_mav, MavParams, MavState};
use thirdview::mpc::{MpcConfig, NmpcSolver, ReferenceTrajectory};

fn main() {
    let params = MavParams::default();
    let cfg = MpcConfig::default();
    let mut solver = NmpcSolver::new(cfg.clone(), params).unwrap();
    let target = Vector3::new(1.0, 0.0, 2.0);
    let reference = ReferenceTrajectory::hover(target, &params, cfg.horizon);

    let mut s = MavState::hover_at(Vector3::new(0.0, 0.0, 2.0), 0.0);
    let mut input = solver.solve(&s, &reference).unwrap().input;
    println!(
        "first input: roll {:.4} pitch {:.4} thrust {:.3} N",
        input.roll_cmd, input.pitch_cmd, input.thrust
    );
    for tick in 0..600 {
        if tick % 5 == 0 {
            let sol = solver.solve(&s, &reference).unwrap();
            input = sol.input;
            if tick % 50 == 0 {
                println!(
                    "t={:4.1} x={:.3} vx={:.3} pitch={:.3} cost={:.3} iters={}",
                    tick as f64 / 100.0,
                    s.p.x,
                    s.v.x,
                    s.pitch,
                    sol.cost,
                    sol.iterations
                );
            }
        }
        s = step_mav(&s, &input, &params, 0.01).unwrap();
    }
    println!("final error {:.4} m", (s.p - target).norm());
}
