//! Run metrics, computed by folding log records. The simulator feeds the
//! same accumulator live, so recomputing from a log reproduces the live
//! result exactly.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::command::Command;
use crate::frames::Pose;
use crate::harness::log::{LogError, LogRecord, Snapshot};
use crate::mission::{MissionPhase, Target};
use crate::sensing::DetectorConfig;

/// Window after an injected displacement within which the vehicle must be
/// back on station, seconds.
pub const RECOVERY_WINDOW: f64 = 15.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub duration: f64,
    pub arrivals: u32,
    /// Planar odometry error at transfer arrivals, metres.
    pub arrival_displacement_mean: f64,
    pub arrival_displacement_max: f64,
    pub transfer_attempts: u32,
    /// Transfers that ended with the target reacquired.
    pub transfer_successes: u32,
    /// Reacquisitions that happened before any search climb.
    pub search_free_acquisitions: u32,
    pub commands_rejected: u32,
    pub frame_resets: u32,
    /// Control ticks spent tracking and the share of them on station.
    pub tracking_samples: u32,
    pub inside_fraction: f64,
    pub detections: u32,
    pub detections_per_second: f64,
    /// Whole seconds with the target inside the envelope at every tick, and
    /// how many of them saw at least one detection.
    pub envelope_seconds: u32,
    pub envelope_seconds_detected: u32,
    pub detection_second_fraction: f64,
    /// Detections of targets that were geometrically out of view.
    pub invisible_detections: u32,
    pub recovery_attempts: u32,
    pub recovery_successes: u32,
    pub recovery_time_max: f64,
    pub landing_offset: Option<f64>,
    /// Setpoint commands emitted while the stability gate was closed.
    pub unstable_commands: u32,
}

impl RunMetrics {
    /// Looks up a numeric metric by field name.
    pub fn get(&self, name: &str) -> Option<f64> {
        let value = serde_json::to_value(self).ok()?;
        value.get(name)?.as_f64()
    }
}

#[derive(Debug, Clone)]
struct Recovery {
    start: f64,
    ugv: usize,
    entered: Option<f64>,
}

#[derive(Debug, Clone)]
struct SecondBin {
    index: u64,
    envelope_samples: u32,
    detections: u32,
}

#[derive(Debug, Clone)]
struct PendingTransfer {
    to: usize,
    arrived_at: Option<f64>,
}

/// Folds log records into [`RunMetrics`].
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    m: RunMetrics,
    displacement_sum: f64,
    plant_rate: u64,
    samples_per_second: u32,
    r_max: f64,
    detection_timeout: f64,
    offset: Vector3<f64>,
    t_c_m: Pose,
    detector: DetectorConfig,
    home_detector: DetectorConfig,
    phase: MissionPhase,
    inside_samples: u32,
    tracking_seconds: f64,
    control_period: f64,
    bin: Option<SecondBin>,
    recovery: Option<Recovery>,
    transfer: Option<PendingTransfer>,
    finished: bool,
}

impl Default for MetricsAccumulator {
    fn default() -> Self {
        Self {
            m: RunMetrics::default(),
            displacement_sum: 0.0,
            plant_rate: 100,
            samples_per_second: 20,
            r_max: 0.2,
            detection_timeout: 2.0,
            offset: Vector3::zeros(),
            t_c_m: Pose::downward_camera(Vector3::zeros()),
            detector: DetectorConfig::default(),
            home_detector: DetectorConfig::tag(),
            phase: MissionPhase::Idle,
            inside_samples: 0,
            tracking_seconds: 0.0,
            control_period: 0.05,
            bin: None,
            recovery: None,
            transfer: None,
            finished: false,
        }
    }
}

fn planar(a: &Pose, b: &Pose) -> f64 {
    (a.translation.xy() - b.translation.xy()).norm()
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: &LogRecord) {
        match record {
            LogRecord::Header {
                plant_rate,
                control_divider,
                scenario,
                ..
            } => {
                self.plant_rate = u64::from(*plant_rate);
                self.samples_per_second = plant_rate / control_divider;
                self.control_period = f64::from(*control_divider) / f64::from(*plant_rate);
                self.r_max = scenario.servo.r_max;
                self.detection_timeout = scenario.servo.detection_timeout;
                self.offset = scenario.servo.offset_vector();
                self.t_c_m = scenario.camera_mount();
                self.detector = scenario.detector;
                self.home_detector = scenario.home_detector;
            }
            LogRecord::Snapshot(s) => self.snapshot(s),
            LogRecord::Detection {
                tick,
                target,
                mav_truth,
                target_truth,
                ..
            } => {
                self.m.detections += 1;
                let cfg = match target {
                    Target::Ugv(_) => &self.detector,
                    Target::Home => &self.home_detector,
                };
                let camera = mav_truth.compose(&self.t_c_m);
                if !cfg.is_visible(&camera, mav_truth.translation.z, target_truth) {
                    self.m.invisible_detections += 1;
                }
                if matches!(target, Target::Ugv(_)) {
                    self.bin_for(*tick).detections += 1;
                }
            }
            LogRecord::Setpoint { stable, .. } => {
                if !stable {
                    self.m.unstable_commands += 1;
                }
            }
            LogRecord::Phase { t, from, to, .. } => {
                match (from, to) {
                    (MissionPhase::Tracking { .. } | MissionPhase::Idle, MissionPhase::Transfer { to, .. }) => {
                        self.m.transfer_attempts += 1;
                        self.transfer = Some(PendingTransfer {
                            to: *to,
                            arrived_at: None,
                        });
                    }
                    (MissionPhase::Searching { ugv }, MissionPhase::Tracking { .. }) => {
                        if let Some(p) = &self.transfer {
                            if p.to == *ugv {
                                if let Some(arrived) = p.arrived_at {
                                    self.m.transfer_successes += 1;
                                    if t - arrived <= self.detection_timeout {
                                        self.m.search_free_acquisitions += 1;
                                    }
                                    self.transfer = None;
                                }
                            }
                        }
                    }
                    _ => {}
                }
                self.phase = *to;
            }
            LogRecord::FrameReset { .. } => self.m.frame_resets += 1,
            LogRecord::Command { t, command, .. } => match command {
                Command::SetOffset { v } => self.offset = Vector3::from(*v),
                Command::InjectOffset { .. } => {
                    self.close_recovery();
                    if let MissionPhase::Tracking { ugv } | MissionPhase::Searching { ugv } = self.phase {
                        self.m.recovery_attempts += 1;
                        self.recovery = Some(Recovery {
                            start: *t,
                            ugv,
                            entered: None,
                        });
                    }
                }
                _ => {}
            },
            LogRecord::CommandRejected { .. } => self.m.commands_rejected += 1,
            LogRecord::CommandSuperseded { .. } | LogRecord::Slam { .. } => {}
            LogRecord::Arrival {
                t, to, estimate, truth, ..
            } => {
                if to.is_some() {
                    let d = planar(estimate, truth);
                    self.m.arrivals += 1;
                    self.displacement_sum += d;
                    self.m.arrival_displacement_max = self.m.arrival_displacement_max.max(d);
                    self.m.arrival_displacement_mean = self.displacement_sum / f64::from(self.m.arrivals);
                    if let Some(p) = self.transfer.as_mut() {
                        p.arrived_at = Some(*t);
                    }
                }
            }
            LogRecord::Landed { truth, home, .. } => {
                self.m.landing_offset = Some(planar(truth, home));
            }
            LogRecord::End { t, .. } => {
                self.m.duration = *t;
                self.close_bin();
                self.close_recovery();
                self.finished = true;
            }
        }
    }

    fn bin_for(&mut self, tick: u64) -> &mut SecondBin {
        let index = tick / self.plant_rate;
        if self.bin.as_ref().is_some_and(|b| b.index != index) {
            self.close_bin();
        }
        self.bin.get_or_insert(SecondBin {
            index,
            envelope_samples: 0,
            detections: 0,
        })
    }

    fn close_bin(&mut self) {
        if let Some(b) = self.bin.take() {
            if b.envelope_samples == self.samples_per_second {
                self.m.envelope_seconds += 1;
                if b.detections > 0 {
                    self.m.envelope_seconds_detected += 1;
                }
                self.m.detection_second_fraction =
                    f64::from(self.m.envelope_seconds_detected) / f64::from(self.m.envelope_seconds);
            }
        }
    }

    fn close_recovery(&mut self) {
        if let Some(r) = self.recovery.take() {
            if let Some(entered) = r.entered {
                let took = entered - r.start;
                if took <= RECOVERY_WINDOW {
                    self.m.recovery_successes += 1;
                    self.m.recovery_time_max = self.m.recovery_time_max.max(took);
                }
            }
        }
    }

    /// Planar distance from the MAV to the hover point above `ugv`.
    fn station_error(&self, s: &Snapshot, ugv: usize) -> Option<f64> {
        let u = s.ugvs.get(ugv)?;
        let heading = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), u.truth.yaw());
        let point = u.truth.translation + heading * self.offset;
        Some((s.mav.truth.translation.xy() - point.xy()).norm())
    }

    fn snapshot(&mut self, s: &Snapshot) {
        let tracked = match s.phase {
            MissionPhase::Tracking { ugv } => Some(ugv),
            _ => None,
        };
        let mut in_envelope = false;
        if let Some(ugv) = tracked {
            self.m.tracking_samples += 1;
            self.tracking_seconds += self.control_period;
            if self.station_error(s, ugv).is_some_and(|e| e <= self.r_max) {
                self.inside_samples += 1;
            }
            self.m.inside_fraction = f64::from(self.inside_samples) / f64::from(self.m.tracking_samples);
            if let Some(u) = s.ugvs.get(ugv) {
                let camera = s.mav.truth.compose(&self.t_c_m);
                in_envelope = self.detector.is_visible(&camera, s.mav.truth.translation.z, &u.truth);
            }
        }
        let bin = self.bin_for(s.tick);
        if in_envelope {
            bin.envelope_samples += 1;
        }
        if self.tracking_seconds > 0.0 {
            self.m.detections_per_second = f64::from(self.m.detections) / self.tracking_seconds;
        }
        if let Some(r) = &self.recovery {
            let ugv = r.ugv;
            let on_station = matches!(
                s.phase,
                MissionPhase::Tracking { ugv: u } | MissionPhase::Searching { ugv: u } if u == ugv
            ) && self.station_error(s, ugv).is_some_and(|e| e <= self.r_max);
            let r = self.recovery.as_mut().expect("checked above");
            if on_station {
                r.entered.get_or_insert(s.t);
            } else {
                r.entered = None;
            }
        }
    }

    /// Metrics so far, without closing open windows.
    pub fn current(&self) -> RunMetrics {
        self.m.clone()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn finish(mut self) -> RunMetrics {
        if !self.finished {
            self.close_bin();
            self.close_recovery();
        }
        self.m
    }
}

/// Recomputes metrics from a complete log.
pub fn compute_metrics(records: &[LogRecord]) -> Result<RunMetrics, LogError> {
    if !matches!(records.last(), Some(LogRecord::End { .. })) {
        return Err(LogError::Truncated);
    }
    let mut acc = MetricsAccumulator::new();
    for r in records {
        acc.push(r);
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrival(t: f64, offset: f64) -> LogRecord {
        LogRecord::Arrival {
            t,
            tick: (t * 100.0) as u64,
            to: Some(1),
            estimate: Pose::from_translation(offset, 0.0, 2.5),
            truth: Pose::from_translation(0.0, 0.0, 2.5),
        }
    }

    #[test]
    fn three_arrivals_fixture() {
        let records = vec![
            arrival(1.0, 0.1),
            arrival(2.0, 0.2),
            arrival(3.0, 0.3),
            LogRecord::End { t: 4.0, tick: 400 },
        ];
        let m = compute_metrics(&records).unwrap();
        assert_eq!(m.arrivals, 3);
        assert!((m.arrival_displacement_mean - 0.2).abs() < 1e-12);
        assert!((m.arrival_displacement_max - 0.3).abs() < 1e-12);
    }

    #[test]
    fn truncated_log_rejected() {
        assert!(matches!(
            compute_metrics(&[arrival(1.0, 0.1)]),
            Err(LogError::Truncated)
        ));
    }

    #[test]
    fn metric_lookup_by_name() {
        let m = RunMetrics {
            transfer_successes: 7,
            ..RunMetrics::default()
        };
        assert_eq!(m.get("transfer_successes"), Some(7.0));
        assert_eq!(m.get("nope"), None);
        assert_eq!(m.get("landing_offset"), None);
    }
}
