//! Integrates the multirotor plant open loop: hover, a tilted hover and a
//! free fall.

use nalgebra::Vector3;
use thirdview::dynamics::{step_mav, ControlInput, MavParams, MavState};

fn fly(label: &str, input: ControlInput, params: &MavParams) {
    let mut s = MavState::hover_at(Vector3::new(0.0, 0.0, 10.0), 0.0);
    for _ in 0..100 {
        s = step_mav(&s, &input, params, 0.01).unwrap();
    }
    println!(
        "{label:<12} after 1 s: p={:.3?} v={:.3?} roll={:.3} pitch={:.3}",
        s.p.as_slice(),
        s.v.as_slice(),
        s.roll,
        s.pitch
    );
}

fn main() {
    let params = MavParams::default();
    let hover = ControlInput::hover(&params);
    fly("hover", hover, &params);
    fly(
        "pitch 0.1",
        ControlInput {
            pitch_cmd: 0.1,
            ..hover
        },
        &params,
    );
    fly("no thrust", ControlInput { thrust: 0.0, ..hover }, &params);
}
