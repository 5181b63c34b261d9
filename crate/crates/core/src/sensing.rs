//! Parametric perception models: downward-camera detection of a target in
//! tag or feature regime, visual-inertial odometry with random-walk drift,
//! and LiDAR SLAM localisation with small bounded error.
//!
//! Every stochastic call takes its random stream explicitly. Streams are
//! ChaCha8 generators keyed by `(seed, stream id)` so that a scenario replays
//! bit-exactly.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::frames::Pose;

pub type SimRng = ChaCha8Rng;

/// Independent deterministic stream `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Tag,
    Feature,
}

/// Detection envelope and noise for one detector.
///
/// Noise levels are fitted defaults chosen to reproduce the aggregate
/// behaviour of the real detectors, not measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub regime: Regime,
    /// Half-angle of the detection cone about the camera axis, radians.
    pub half_fov: f64,
    pub min_height: f64,
    pub max_height: f64,
    /// Per-attempt success probability inside the envelope.
    pub detection_probability: f64,
    /// Per-axis translation noise, metres.
    pub translation_sigma: f64,
    pub yaw_sigma: f64,
    /// Extra planar scatter of the bounding-box centre (feature regime only).
    pub box_jitter_sigma: f64,
    pub attempt_rate: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::feature()
    }
}

impl DetectorConfig {
    pub fn tag() -> Self {
        Self {
            regime: Regime::Tag,
            half_fov: 40f64.to_radians(),
            min_height: 0.5,
            max_height: 5.0,
            detection_probability: 0.8,
            translation_sigma: 0.01,
            yaw_sigma: 0.01,
            box_jitter_sigma: 0.0,
            attempt_rate: 20.0,
        }
    }

    pub fn feature() -> Self {
        Self {
            regime: Regime::Feature,
            translation_sigma: 0.05,
            yaw_sigma: 0.01,
            box_jitter_sigma: 0.02,
            ..Self::tag()
        }
    }

    /// Same envelope, zero noise, certain detection.
    pub fn ideal(regime: Regime) -> Self {
        Self {
            regime,
            detection_probability: 1.0,
            translation_sigma: 0.0,
            yaw_sigma: 0.0,
            box_jitter_sigma: 0.0,
            ..Self::tag()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.detection_probability) {
            return Err("detection probability must lie in [0, 1]".into());
        }
        if self.translation_sigma < 0.0 || self.yaw_sigma < 0.0 || self.box_jitter_sigma < 0.0 {
            return Err("noise levels must be non-negative".into());
        }
        if !(self.half_fov > 0.0 && self.half_fov < std::f64::consts::FRAC_PI_2) {
            return Err("half field of view must lie in (0, 90°)".into());
        }
        if !(self.min_height >= 0.0 && self.max_height > self.min_height) {
            return Err("detection height window is empty".into());
        }
        if !(self.attempt_rate > 0.0) {
            return Err("attempt rate must be positive".into());
        }
        Ok(())
    }

    /// Whether a target at `target` is inside the envelope of a camera at
    /// world pose `camera` carried by a vehicle at height `mav_z`.
    pub fn is_visible(&self, camera: &Pose, mav_z: f64, target: &Pose) -> bool {
        let height = mav_z - target.translation.z;
        if !(height >= self.min_height && height <= self.max_height) {
            return false;
        }
        let c = camera.inverse().transform_point(&target.translation);
        if c.z <= 0.0 {
            return false;
        }
        c.xy().norm().atan2(c.z) <= self.half_fov
    }
}

/// A detected target pose in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Target pose relative to the camera, `T_U^C`.
    pub rel_camera: Pose,
    pub regime: Regime,
    pub time: f64,
}

/// One detection attempt. Returns `None` whenever the target is outside the
/// envelope; inside it, succeeds with the configured probability and
/// corrupts the true relative pose with regime noise.
pub fn detect(
    mav_true: &Pose,
    ugv_true: &Pose,
    t_c_m: &Pose,
    cfg: &DetectorConfig,
    time: f64,
    rng: &mut SimRng,
) -> Option<Detection> {
    let camera = mav_true.compose(t_c_m);
    if !cfg.is_visible(&camera, mav_true.translation.z, ugv_true) {
        return None;
    }
    if rng.random::<f64>() >= cfg.detection_probability {
        return None;
    }
    let truth = camera.inverse().compose(ugv_true);
    let mut noise = Vector3::new(normal(rng), normal(rng), normal(rng)) * cfg.translation_sigma;
    if cfg.regime == Regime::Feature {
        noise.x += normal(rng) * cfg.box_jitter_sigma;
        noise.y += normal(rng) * cfg.box_jitter_sigma;
    }
    let yaw_err = normal(rng) * cfg.yaw_sigma;
    let rel_camera = Pose::new(
        truth.translation + noise,
        truth.rotation * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_err),
    );
    Some(Detection {
        rel_camera,
        regime: cfg.regime,
        time,
    })
}

/// Drift intensities of the odometry random walk.
///
/// Each axis receives increments with variance
/// `σ_time² · dt + σ_dist² · distance`, so drift keeps growing slowly while
/// hovering and faster while travelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VioNoise {
    /// Planar random walk per √s.
    pub sigma_xy: f64,
    pub sigma_z: f64,
    pub sigma_yaw: f64,
    /// Planar random walk per √m travelled.
    pub sigma_xy_distance: f64,
    pub sigma_z_distance: f64,
    pub sigma_yaw_distance: f64,
}

impl Default for VioNoise {
    fn default() -> Self {
        Self {
            sigma_xy: 0.004,
            sigma_z: 0.002,
            sigma_yaw: 0.0005,
            sigma_xy_distance: 0.045,
            sigma_z_distance: 0.01,
            sigma_yaw_distance: 0.002,
        }
    }
}

impl VioNoise {
    pub fn none() -> Self {
        Self {
            sigma_xy: 0.0,
            sigma_z: 0.0,
            sigma_yaw: 0.0,
            sigma_xy_distance: 0.0,
            sigma_z_distance: 0.0,
            sigma_yaw_distance: 0.0,
        }
    }

    /// Purely time-driven planar walk.
    pub fn time_only(sigma_xy: f64) -> Self {
        Self {
            sigma_xy,
            ..Self::none()
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::none()
    }
}

/// Odometry estimate of the MAV pose: `estimate = drift ∘ truth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VioState {
    pub estimate: Pose,
    pub drift: Pose,
    pub noise: VioNoise,
}

impl VioState {
    pub fn new(truth: Pose, noise: VioNoise) -> Self {
        Self {
            estimate: truth,
            drift: Pose::identity(),
            noise,
        }
    }

    /// Ground truth implied by the current estimate and drift.
    pub fn truth(&self) -> Pose {
        self.drift.inverse().compose(&self.estimate)
    }

    /// Overwrites the estimate, e.g. after a frame reset; the drift absorbs
    /// the difference.
    pub fn reset_to(&mut self, estimate: Pose) {
        let truth = self.truth();
        self.estimate = estimate;
        self.drift = estimate.compose(&truth.inverse());
    }

    /// Adds a fixed world-frame translation to the drift.
    pub fn inject_offset(&mut self, offset: Vector3<f64>) {
        let truth = self.truth();
        self.drift = Pose::new(offset, UnitQuaternion::identity()).compose(&self.drift);
        self.estimate = self.drift.compose(&truth);
    }
}

/// Advances the odometry by a body-frame motion increment of the true pose.
pub fn vio_step(state: &VioState, increment: &Pose, dt: f64, rng: &mut SimRng) -> VioState {
    let truth = state.truth().compose(increment);
    let n = &state.noise;
    let mut drift = state.drift;
    if !n.is_zero() {
        let dist = increment.translation.norm();
        let sd = |per_time: f64, per_dist: f64| (per_time * per_time * dt + per_dist * per_dist * dist).sqrt();
        let sxy = sd(n.sigma_xy, n.sigma_xy_distance);
        let sz = sd(n.sigma_z, n.sigma_z_distance);
        let syaw = sd(n.sigma_yaw, n.sigma_yaw_distance);
        let dx = normal(rng) * sxy;
        let dy = normal(rng) * sxy;
        let dz = normal(rng) * sz;
        let dyaw = normal(rng) * syaw;
        // heading drift pivots about the current estimate, not the origin
        let pivot = state.estimate.translation;
        let rot = Pose::new(pivot, UnitQuaternion::from_axis_angle(&Vector3::z_axis(), dyaw))
            .compose(&Pose::new(-pivot, UnitQuaternion::identity()));
        let step = Pose::new(Vector3::new(dx, dy, dz), UnitQuaternion::identity()).compose(&rot);
        drift = step.compose(&drift);
    }
    VioState {
        estimate: drift.compose(&truth),
        drift,
        noise: *n,
    }
}

/// LiDAR SLAM localisation of a ground vehicle: truth plus a planar error
/// truncated at three standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlamModel {
    pub sigma: f64,
    pub update_rate: f64,
}

impl Default for SlamModel {
    fn default() -> Self {
        Self {
            sigma: 0.02,
            update_rate: 1.0 / 3.0,
        }
    }
}

pub fn slam_pose(truth: &Pose, model: &SlamModel, rng: &mut SimRng) -> Pose {
    if model.sigma <= 0.0 {
        return *truth;
    }
    let limit = 3.0 * model.sigma;
    loop {
        let e = Vector3::new(normal(rng), normal(rng), 0.0) * model.sigma;
        if e.norm() <= limit {
            return Pose::new(truth.translation + e, truth.rotation);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Pose {
        Pose::downward_camera(Vector3::zeros())
    }

    fn std_dev(samples: &[f64]) -> f64 {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn far_target_is_not_detected() {
        let cfg = DetectorConfig {
            half_fov: 45f64.to_radians(),
            ..DetectorConfig::ideal(Regime::Tag)
        };
        let mut rng = stream_rng(1, 0);
        let mav = Pose::from_translation(0.0, 0.0, 2.0);
        let ugv = Pose::from_translation(10.0, 0.0, 0.0);
        assert!(detect(&mav, &ugv, &cam(), &cfg, 0.0, &mut rng).is_none());
    }

    #[test]
    fn ideal_detection_directly_below() {
        let cfg = DetectorConfig::ideal(Regime::Tag);
        let mut rng = stream_rng(1, 0);
        let mav = Pose::from_xyz_yaw(1.0, 1.0, 2.0, 0.3);
        let ugv = Pose::from_xyz_yaw(1.0, 1.0, 0.0, 0.3);
        let d = detect(&mav, &ugv, &cam(), &cfg, 0.0, &mut rng).unwrap();
        assert!((d.rel_camera.translation - Vector3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
        assert!(d.rel_camera.yaw().abs() < 1e-12);
    }

    #[test]
    fn translation_noise_has_configured_sigma() {
        let cfg = DetectorConfig {
            translation_sigma: 0.05,
            detection_probability: 1.0,
            ..DetectorConfig::tag()
        };
        let mut rng = stream_rng(2, 0);
        let mav = Pose::from_translation(0.0, 0.0, 2.0);
        let ugv = Pose::identity();
        let xs: Vec<f64> = (0..10_000)
            .map(|_| {
                detect(&mav, &ugv, &cam(), &cfg, 0.0, &mut rng)
                    .unwrap()
                    .rel_camera
                    .translation
                    .x
            })
            .collect();
        let s = std_dev(&xs);
        assert!((s - 0.05).abs() / 0.05 < 0.05, "sigma {s}");
    }

    #[test]
    fn feature_scatter_exceeds_tag_scatter() {
        let mav = Pose::from_translation(0.0, 0.0, 2.0);
        let ugv = Pose::from_translation(0.3, -0.2, 0.0);
        let scatter = |cfg: DetectorConfig, seed| {
            let mut rng = stream_rng(seed, 0);
            let cfg = DetectorConfig {
                detection_probability: 1.0,
                ..cfg
            };
            let xs: Vec<f64> = (0..5000)
                .map(|_| {
                    detect(&mav, &ugv, &cam(), &cfg, 0.0, &mut rng)
                        .unwrap()
                        .rel_camera
                        .translation
                        .x
                })
                .collect();
            std_dev(&xs)
        };
        assert!(scatter(DetectorConfig::feature(), 3) > scatter(DetectorConfig::tag(), 3));
    }

    #[test]
    fn no_detection_just_outside_the_cone() {
        let cfg = DetectorConfig::ideal(Regime::Feature);
        let mut rng = stream_rng(4, 0);
        let h = 2.0;
        let mav = Pose::from_translation(0.0, 0.0, h);
        for k in 0..360 {
            let a = (k as f64).to_radians();
            for (scale, expect) in [(1.0 + 1e-6, false), (1.0 - 1e-6, true)] {
                let r = h * cfg.half_fov.tan() * scale;
                let ugv = Pose::from_translation(r * a.cos(), r * a.sin(), 0.0);
                let got = detect(&mav, &ugv, &cam(), &cfg, 0.0, &mut rng).is_some();
                assert_eq!(got, expect, "angle {k}, scale {scale}");
            }
        }
        for (z, expect) in [
            (cfg.max_height + 1e-6, false),
            (cfg.max_height - 1e-6, true),
            (cfg.min_height - 1e-6, false),
        ] {
            let mav = Pose::from_translation(0.0, 0.0, z);
            assert_eq!(
                detect(&mav, &Pose::identity(), &cam(), &cfg, 0.0, &mut rng).is_some(),
                expect
            );
        }
    }

    #[test]
    fn noiseless_vio_tracks_truth() {
        let start = Pose::from_xyz_yaw(0.5, 0.0, 1.0, 0.2);
        let mut vio = VioState::new(start, VioNoise::none());
        let mut truth = start;
        let mut rng = stream_rng(5, 0);
        let inc = Pose::from_xyz_yaw(0.01, 0.002, 0.0, 0.003);
        for _ in 0..1000 {
            vio = vio_step(&vio, &inc, 0.01, &mut rng);
            truth = truth.compose(&inc);
        }
        assert!((vio.estimate.translation - truth.translation).norm() < 1e-9);
    }

    #[test]
    fn stationary_drift_matches_random_walk() {
        let noise = VioNoise::time_only(0.05);
        let mut rng = stream_rng(6, 0);
        let dt = 0.5;
        let finals: Vec<f64> = (0..1000)
            .map(|_| {
                let mut vio = VioState::new(Pose::identity(), noise);
                for _ in 0..200 {
                    vio = vio_step(&vio, &Pose::identity(), dt, &mut rng);
                }
                vio.estimate.translation.x
            })
            .collect();
        let s = std_dev(&finals);
        assert!((s - 0.5).abs() / 0.5 < 0.1, "sigma {s}");
    }

    #[test]
    fn reset_and_injection_keep_truth() {
        let mut rng = stream_rng(7, 0);
        let mut vio = VioState::new(Pose::from_translation(1.0, 2.0, 2.0), VioNoise::default());
        for _ in 0..100 {
            vio = vio_step(&vio, &Pose::from_translation(0.01, 0.0, 0.0), 0.01, &mut rng);
        }
        let truth = vio.truth();
        vio.reset_to(Pose::from_xyz_yaw(5.0, 5.0, 2.0, 0.1));
        assert!((vio.truth().translation - truth.translation).norm() < 1e-12);
        vio.inject_offset(Vector3::new(0.3, -0.4, 0.0));
        assert!((vio.truth().translation - truth.translation).norm() < 1e-12);
        assert!((vio.estimate.translation - Vector3::new(5.3, 4.6, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn slam_error_sigma_and_truncation() {
        let model = SlamModel::default();
        let mut rng = stream_rng(8, 0);
        let truth = Pose::from_xyz_yaw(3.0, -1.0, 0.0, 0.4);
        let errs: Vec<Vector3<f64>> = (0..10_000)
            .map(|_| slam_pose(&truth, &model, &mut rng).translation - truth.translation)
            .collect();
        assert!(errs.iter().all(|e| e.norm() <= 0.06 && e.z == 0.0));
        let xs: Vec<f64> = errs.iter().map(|e| e.x).collect();
        let s = std_dev(&xs);
        assert!((s - 0.02).abs() / 0.02 < 0.05, "sigma {s}");
        let exact = SlamModel { sigma: 0.0, ..model };
        assert_eq!(slam_pose(&truth, &exact, &mut rng), truth);
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(9, 1).random()).collect();
        let b: u64 = stream_rng(9, 2).random();
        assert!(a.iter().all(|x| *x == a[0]));
        assert_ne!(a[0], b);
    }
}
