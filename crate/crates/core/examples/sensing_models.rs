//! Samples the detector envelope and the odometry drift model.

use nalgebra::Vector3;
use thirdview::frames::Pose;
use thirdview::sensing::{detect, stream_rng, vio_step, DetectorConfig, VioNoise, VioState};

fn main() {
    let camera = Pose::downward_camera(Vector3::zeros());
    let ugv = Pose::identity();
    let cfg = DetectorConfig::feature();
    let mut rng = stream_rng(1, 1);

    println!("detection rate by horizontal offset at h = 2 m");
    for offset in [0.0, 0.5, 1.0, 1.5, 1.7, 2.0] {
        let mav = Pose::from_xyz_yaw(offset, 0.0, 2.0, 0.0);
        let hits = (0..1000)
            .filter(|_| detect(&mav, &ugv, &camera, &cfg, 0.0, &mut rng).is_some())
            .count();
        println!("  {offset:.1} m: {:.1}%", hits as f64 / 10.0);
    }

    println!("odometry drift after a 5 m leg at 0.3 m/s");
    let dt = 0.01;
    let step = Pose::from_translation(0.3 * dt, 0.0, 0.0);
    let mut errs = Vec::new();
    for trial in 0..500 {
        let mut rng = stream_rng(trial, 2);
        let mut vio = VioState::new(Pose::from_translation(0.0, 0.0, 2.0), VioNoise::default());
        for _ in 0..(5.0 / 0.3 / dt) as usize {
            vio = vio_step(&vio, &step, dt, &mut rng);
        }
        errs.push(vio.estimate.planar_distance(&vio.truth()));
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let max = errs.iter().cloned().fold(0.0, f64::max);
    println!(
        "  planar error mean {mean:.3} m, max {max:.3} m over {} trials",
        errs.len()
    );
}
