//! Steps the simulator through one transfer and prints every phase change.

use thirdview::harness::log::LogRecord;
use thirdview::harness::sim::SharedBuffer;
use thirdview::harness::{read_log, Scenario, Simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = Scenario::builtin("ten-transfers")?;
    scenario.duration = 45.0;
    scenario.events.retain(|e| e.t < scenario.duration);

    let log = SharedBuffer::default();
    let mut sim = Simulation::new(&scenario, Box::new(log.clone()))?;
    let metrics = sim.run_to_end()?;

    for record in read_log(std::io::Cursor::new(log.take()))? {
        match record {
            LogRecord::Phase { t, from, to, .. } => println!("{t:6.2}  {from:?} -> {to:?}"),
            LogRecord::FrameReset {
                t, ugv, before, after, ..
            } => println!(
                "{t:6.2}  frame reset on ugv{ugv}: moved {:.3} m",
                before.planar_distance(&after)
            ),
            LogRecord::Arrival { t, estimate, truth, .. } => println!(
                "{t:6.2}  arrived, odometry off by {:.3} m",
                estimate.planar_distance(&truth)
            ),
            _ => {}
        }
    }
    println!(
        "{}/{} transfers reacquired, {} without searching",
        metrics.transfer_successes, metrics.transfer_attempts, metrics.search_free_acquisitions
    );
    Ok(())
}
