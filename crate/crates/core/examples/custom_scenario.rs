//! Builds a scenario from inline TOML, runs it and checks its assertions.

use thirdview::harness::{run_scenario, Scenario};

const SCENARIO: &str = r#"
name = "figure-of-eight"
seed = 7
duration = 40.0
start_tracking = "rover"

[mav]
position = [0.0, 0.0, 2.0]

[[ugv]]
id = "rover"
pose = [0.0, 0.0, 0.0]

[[event]]
t = 5.0
type = "drive"
ugv = "rover"
linear = 0.4
angular = 0.5

[[event]]
t = 18.0
type = "drive"
ugv = "rover"
linear = 0.4
angular = -0.5

[[event]]
t = 30.0
type = "set_offset"
v = [0.3, 0.0, 0.5]

[[assert]]
metric = "invisible_detections"
op = "=="
value = 0

[[assert]]
metric = "detection_second_fraction"
op = ">="
value = 0.99
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::from_toml(SCENARIO)?;
    let outcome = run_scenario(&scenario, Box::new(std::io::sink()))?;
    for a in &outcome.assertions {
        println!(
            "{} {} {} {} (got {:?})",
            if a.passed { "ok  " } else { "FAIL" },
            a.assertion.metric,
            a.assertion.op.symbol(),
            a.assertion.value,
            a.actual
        );
    }
    println!("detections/s {:.1}", outcome.metrics.detections_per_second);
    Ok(())
}
