//! Headless acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{finite_difference_linearisation, matrix_of, max_abs, riccati_first_gain};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thirdview::dynamics::{MavParams, MavState};
use thirdview::frames::{compose, relative_in_world, reset_mav_world, Pose};
use thirdview::harness::{run_scenario_to_vec, RunMetrics, Scenario};
use thirdview::mpc::{
    gradient, state_vector, InputVec, MpcConfig, NmpcSolver, PredictionModel, ReferenceTrajectory, NU,
};

const SEEDS: u64 = 20;

struct Verdict {
    pass: bool,
    detail: String,
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        if q.iter().map(|v| v * v).sum::<f64>() > 1e-3 {
            let t = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
            return Pose::from_parts_wxyz(t, q);
        }
    }
}

fn transforms() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut chain_err = 0.0f64;
    let mut reset_err = 0.0f64;
    for _ in 0..10_000 {
        let (w, c, u) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
        let chain = relative_in_world(&w, &c, &u);
        chain_err = chain_err.max(max_abs(
            &(matrix_of(&chain) - matrix_of(&w) * matrix_of(&c) * matrix_of(&u)),
        ));
        let mav = reset_mav_world(&w, &u);
        reset_err = reset_err.max(max_abs(&(matrix_of(&compose(&mav, &u)) - matrix_of(&w))));
    }
    Verdict {
        pass: chain_err < 1e-9 && reset_err < 1e-9,
        detail: format!("chain max err {chain_err:.2e}, reset closure {reset_err:.2e}"),
    }
}

fn mpc() -> Verdict {
    let params = MavParams::default();
    let cfg = MpcConfig::default();

    let mut solver = NmpcSolver::new(cfg.clone(), params).unwrap();
    let x0 = MavState::hover_at(Vector3::new(0.0, 0.0, 2.0), 0.0);
    let reference = ReferenceTrajectory::hover(x0.p, &params, cfg.horizon);
    let sol = solver.solve(&x0, &reference).unwrap();
    let hover_err = sol
        .input
        .roll_cmd
        .abs()
        .max(sol.input.pitch_cmd.abs())
        .max((sol.input.thrust - params.mass * params.gravity).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    let mut grad_err = 0.0f64;
    for _ in 0..100 {
        let x0 = MavState {
            p: Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(1.0..3.0),
            ),
            v: Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.3..0.3),
            ),
            roll: rng.random_range(-0.2..0.2),
            pitch: rng.random_range(-0.2..0.2),
            yaw: rng.random_range(-3.0..3.0),
        };
        let reference = ReferenceTrajectory::hover(
            Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 2.0),
            &params,
            cfg.horizon,
        );
        let us: Vec<InputVec> = (0..cfg.horizon)
            .map(|_| {
                InputVec::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    params.hover_thrust() * rng.random_range(0.7..1.3),
                )
            })
            .collect();
        let (_, g) = gradient(&x0, &reference, &cfg, &params, &us).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..cfg.horizon {
            for c in 0..NU {
                let mut up = us.clone();
                let mut um = us.clone();
                up[k][c] += h;
                um[k][c] -= h;
                let fd = (gradient(&x0, &reference, &cfg, &params, &up).unwrap().0
                    - gradient(&x0, &reference, &cfg, &params, &um).unwrap().0)
                    / (2.0 * h);
                num += (g[k][c] - fd).powi(2);
                den += fd * fd;
            }
        }
        grad_err = grad_err.max((num / den).sqrt());
    }

    let model = PredictionModel::new(&params, cfg.dt);
    let hover_u = InputVec::new(0.0, 0.0, params.hover_thrust());
    let (a, b) = finite_difference_linearisation(
        &model,
        &state_vector(&MavState::hover_at(Vector3::zeros(), 0.0)),
        &hover_u,
    );
    let k = riccati_first_gain(&a, &b, &cfg);
    let mut solver = NmpcSolver::new(cfg.clone(), params).unwrap();
    let reference = ReferenceTrajectory::hover(Vector3::new(1.0, 0.0, 2.0), &params, cfg.horizon);
    let sol = solver.solve(&x0, &reference).unwrap();
    let err = DVector::from_column_slice((state_vector(&x0) - reference.states[0]).as_slice());
    let lqr: DVector<f64> = DVector::from_column_slice(hover_u.as_slice()) - DMatrix::clone(&k) * err;
    let lqr = solver.bounds().clamp(&InputVec::from_column_slice(lqr.as_slice()));
    let got = InputVec::new(sol.input.roll_cmd, sol.input.pitch_cmd, sol.input.thrust);
    let range = solver.bounds().range();
    let lqr_err = (0..NU).map(|c| (got[c] - lqr[c]).abs() / range[c]).fold(0.0, f64::max);

    Verdict {
        pass: hover_err <= 1e-6 && grad_err < 1e-4 && lqr_err <= 0.05,
        detail: format!(
            "hover input err {hover_err:.1e}, gradient rel err {grad_err:.1e}, LQR channel err {:.2}%",
            lqr_err * 100.0
        ),
    }
}

/// Runs one builtin over seeds 1..=n on all cores.
fn sweep(name: &str, n: u64) -> Vec<RunMetrics> {
    let base = Scenario::builtin(name).unwrap();
    let workers = std::thread::available_parallelism().map_or(1, |w| w.get()) as u64;
    let mut out: Vec<(u64, RunMetrics)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let base = &base;
                s.spawn(move || {
                    (1..=n)
                        .filter(|seed| seed % workers == w)
                        .map(|seed| {
                            let (outcome, _) = run_scenario_to_vec(&base.clone().with_seed(seed)).unwrap();
                            (seed, outcome.metrics)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    out.sort_by_key(|(seed, _)| *seed);
    out.into_iter().map(|(_, m)| m).collect()
}

fn recovery(runs: &[RunMetrics], elapsed: Duration) -> Verdict {
    let ok = runs
        .iter()
        .filter(|m| m.recovery_attempts == 4 && m.recovery_successes == 4)
        .count();
    let worst = runs.iter().map(|m| m.recovery_time_max).fold(0.0, f64::max);
    Verdict {
        pass: ok == runs.len() && elapsed < Duration::from_secs(120),
        detail: format!("{ok}/{} seeds recovered 4/4, slowest entry {worst:.2} s", runs.len()),
    }
}

fn transfers(runs: &[RunMetrics], elapsed: Duration) -> Verdict {
    let full = runs
        .iter()
        .filter(|m| m.transfer_attempts == 10 && m.transfer_successes == 10)
        .count();
    let n = runs.len() as f64;
    let mean = runs.iter().map(|m| m.arrival_displacement_mean).sum::<f64>() / n;
    let max = runs.iter().map(|m| m.arrival_displacement_max).sum::<f64>() / n;
    let global = runs.iter().map(|m| m.arrival_displacement_max).fold(0.0, f64::max);
    Verdict {
        pass: full == runs.len() && (0.12..=0.24).contains(&mean) && max <= 0.35 && elapsed < Duration::from_secs(300),
        detail: format!(
            "{full}/{} seeds 10/10, displacement mean {mean:.3} m, max {max:.3} m (largest single arrival {global:.3} m)",
            runs.len()
        ),
    }
}

fn detection(tracking: &[RunMetrics], all: &[&RunMetrics]) -> Verdict {
    let seconds: u32 = tracking.iter().map(|m| m.envelope_seconds).sum();
    let detected: u32 = tracking.iter().map(|m| m.envelope_seconds_detected).sum();
    let fraction = f64::from(detected) / f64::from(seconds.max(1));
    let invisible: u32 = all.iter().map(|m| m.invisible_detections).sum();
    Verdict {
        pass: seconds > 0 && fraction >= 0.99 && invisible == 0,
        detail: format!(
            "{detected}/{seconds} envelope seconds detected ({:.2}%), {invisible} invisible detections over {} logs",
            fraction * 100.0,
            all.len()
        ),
    }
}

fn return_home(tag: &[RunMetrics], notag: &[RunMetrics]) -> Verdict {
    let r_max = thirdview::mission::ServoConfig::default().r_max;
    let tag_worst = tag
        .iter()
        .map(|m| m.landing_offset.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let notag_worst = notag
        .iter()
        .map(|m| m.landing_offset.map_or(f64::INFINITY, |o| (o - 0.5).abs()))
        .fold(0.0, f64::max);
    Verdict {
        pass: tag_worst <= r_max && notag_worst <= 0.02,
        detail: format!("tag landing offset max {tag_worst:.3} m, tagless |offset - drift| max {notag_worst:.4} m"),
    }
}

fn determinism() -> Verdict {
    let mut same = 0;
    let mut total = 0;
    for name in Scenario::builtin_names() {
        for seed in [1, 2] {
            let s = Scenario::builtin(name).unwrap().with_seed(seed);
            let (_, a) = run_scenario_to_vec(&s).unwrap();
            let (_, b) = run_scenario_to_vec(&s).unwrap();
            total += 1;
            same += usize::from(a == b);
        }
    }
    Verdict {
        pass: same == total,
        detail: format!("{same}/{total} repeated runs byte-identical"),
    }
}

fn report(name: &str, v: &Verdict, elapsed: Duration) -> bool {
    println!(
        "{} {name}: {} [{:.2} s]",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64()
    );
    v.pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn main() -> ExitCode {
    let mut ok = true;

    let (v, t) = timed(transforms);
    ok &= report(
        "transform suite",
        &Verdict {
            pass: v.pass && t < Duration::from_secs(5),
            ..v
        },
        t,
    );

    let (v, t) = timed(mpc);
    ok &= report("mpc stationarity", &v, t);

    let (rec, t) = timed(|| sweep("displacement-recovery", SEEDS));
    ok &= report("displacement recovery", &recovery(&rec, t), t);

    let (ten, t) = timed(|| sweep("ten-transfers", SEEDS));
    ok &= report("ten transfers", &transfers(&ten, t), t);

    let ((track, tag, notag), t) = timed(|| {
        (
            sweep("tracking", SEEDS),
            sweep("return-home-tag", 10),
            sweep("return-home-notag", 3),
        )
    });
    let all: Vec<&RunMetrics> = rec.iter().chain(&ten).chain(&track).chain(&tag).chain(&notag).collect();
    ok &= report("detection contract", &detection(&track, &all), t);
    ok &= report("return home", &return_home(&tag, &notag), Duration::ZERO);

    let (v, t) = timed(determinism);
    ok &= report("determinism", &v, t);

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
