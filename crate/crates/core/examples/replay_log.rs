//! Records a run, replays it at 4x and checks the metrics survive the trip.

use std::time::Duration;

use thirdview::harness::{run_scenario_to_vec, Replay, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = Scenario::builtin("tracking")?;
    scenario.duration = 12.0;
    scenario.events.retain(|e| e.t < scenario.duration);
    let (outcome, log) = run_scenario_to_vec(&scenario)?;
    println!("log: {} bytes", log.len());

    let replay = Replay::from_reader(std::io::Cursor::new(log))?;
    let mut stream = replay.stream(4.0);
    let tick = Duration::from_millis(250);
    let mut shown = 0;
    while !stream.is_done() {
        for s in stream.advance(tick.as_secs_f64()) {
            shown += 1;
            if shown % 20 == 0 {
                let m = s.mav.truth.translation;
                println!("t={:5.2} mav=({:.2}, {:.2}, {:.2}) {:?}", s.t, m.x, m.y, m.z, s.phase);
            }
        }
        std::thread::sleep(tick);
    }
    assert_eq!(replay.metrics()?, outcome.metrics);
    println!("{shown} snapshots replayed; metrics identical to the live run");
    Ok(())
}
