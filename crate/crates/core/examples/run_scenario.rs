//! Runs a builtin scenario (or a TOML file) and prints its metrics.
//!
//! cargo run --release --example run_scenario -- ten-transfers 3

use std::time::Instant;

use thirdview::harness::sim::check_assertions;
use thirdview::harness::{Scenario, Simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "tracking".into());
    let seed: Option<u64> = args.next().map(|s| s.parse()).transpose()?;
    let mut scenario = if name.ends_with(".toml") {
        Scenario::load(&name)?
    } else {
        Scenario::builtin(&name)?
    };
    if let Some(seed) = seed {
        scenario = scenario.with_seed(seed);
    }
    let started = Instant::now();
    let mut sim = Simulation::new(&scenario, Box::new(std::io::sink()))?;
    let metrics = sim.run_to_end()?;
    let stats = sim.solver_stats();
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    for a in check_assertions(&scenario.asserts, &metrics) {
        println!(
            "{} {} {} {} (actual {:?})",
            if a.passed { "ok  " } else { "FAIL" },
            a.assertion.metric,
            a.assertion.op.symbol(),
            a.assertion.value,
            a.actual
        );
    }
    println!(
        "{} solves, {} degraded, {:.1} iterations each, {:.2} s wall",
        stats.solves,
        stats.degraded,
        stats.iterations as f64 / stats.solves.max(1) as f64,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
