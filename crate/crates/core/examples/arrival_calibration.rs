//! Arrival displacement statistics over seeds, for the default odometry
//! noise and for a purely time-driven walk of similar size.
//!
//! cargo run --release --example arrival_calibration -- 20

use thirdview::harness::{run_scenario_to_vec, Scenario};
use thirdview::sensing::VioNoise;

fn sweep(label: &str, noise: VioNoise, seeds: u64) {
    let mut means = Vec::new();
    let mut maxes = Vec::new();
    for seed in 1..=seeds {
        let mut s = Scenario::builtin("ten-transfers").unwrap().with_seed(seed);
        s.vio = noise;
        let (outcome, _) = run_scenario_to_vec(&s).unwrap();
        means.push(outcome.metrics.arrival_displacement_mean);
        maxes.push(outcome.metrics.arrival_displacement_max);
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "{label:<12} mean {:.3} m  max {:.3} m  worst {:.3} m",
        avg(&means),
        avg(&maxes),
        maxes.iter().cloned().fold(0.0, f64::max)
    );
}

fn main() {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    sweep("default", VioNoise::default(), seeds);
    sweep("time only", VioNoise::time_only(0.03), seeds);
}
