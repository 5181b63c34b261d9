//! Servoing executive: hover-setpoint generation above a ground vehicle,
//! stability gating, transfers between vehicles and return-home.
//!
//! The executive runs at the control rate. Each tick it receives the latest
//! detection (if any), the odometry estimate and the robot registry, and
//! decides whether to emit a new position setpoint. A setpoint is only ever
//! emitted while the vehicle is stable; otherwise the previously commanded
//! one stays active.
//!
//! Frame resets re-anchor the odometry estimate on the UGV localization
//! (`T_M^W := T_U^W ∘ (T_U^M)^-1`). They happen on the first stable detection
//! after acquiring a vehicle and when a transfer is requested.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::MavState;
use crate::frames::{relative_in_body, reset_mav_world, wrap_angle, Pose};
use crate::sensing::Detection;

pub type UgvId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissionError {
    #[error("unknown robot id {0}")]
    UnknownRobot(UgvId),
    #[error("a transfer is already active")]
    TransferActive,
    #[error("already returning home")]
    AlreadyReturning,
    #[error("request not allowed in phase {0}")]
    InvalidPhase(String),
    #[error("clock went backwards: {now} < {last}")]
    ClockRegression { now: f64, last: f64 },
}

/// Servoing objectives and thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServoConfig {
    /// Hover height above the target, metres.
    pub hover_height: f64,
    /// Radius of the on-station circle; no correction is commanded inside it.
    pub r_max: f64,
    /// Hover offset in the UGV body frame.
    pub offset: [f64; 3],
    /// Seconds without a detection before giving up on the target.
    pub detection_timeout: f64,
    /// Height above ground used while travelling between targets.
    pub transit_height: f64,
    /// Height climbed to when a target is lost.
    pub search_height: f64,
    /// Speed of the travelling setpoint during transfers and return-home.
    pub transfer_speed: f64,
    pub max_speed: f64,
    pub max_attitude_rate: f64,
    /// Heading mismatch that triggers a new setpoint, radians.
    pub yaw_tolerance: f64,
    /// Centring tolerance over the home tag before descending.
    pub landing_tolerance: f64,
    pub descent_speed: f64,
    /// Height above home at which the vehicle counts as landed.
    pub touchdown_height: f64,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            hover_height: 2.0,
            r_max: 0.2,
            offset: [0.0; 3],
            detection_timeout: 2.0,
            transit_height: 2.5,
            search_height: 5.0,
            transfer_speed: 0.3,
            max_speed: 0.4,
            max_attitude_rate: 0.5,
            yaw_tolerance: 0.15,
            landing_tolerance: 0.05,
            descent_speed: 0.3,
            touchdown_height: 0.1,
        }
    }
}

impl ServoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.r_max > 0.0) {
            return Err("r_max must be positive".into());
        }
        if !(self.hover_height > 0.0 && self.transit_height > 0.0 && self.search_height > 0.0) {
            return Err("heights must be positive".into());
        }
        if !(self.transfer_speed > 0.0 && self.descent_speed > 0.0) {
            return Err("speeds must be positive".into());
        }
        if !(self.detection_timeout > 0.0) {
            return Err("detection timeout must be positive".into());
        }
        Ok(())
    }

    pub fn offset_vector(&self) -> Vector3<f64> {
        Vector3::from(self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomeStage {
    Transit,
    TagServo,
    Descend,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum MissionPhase {
    Idle,
    Tracking {
        ugv: UgvId,
    },
    Searching {
        ugv: UgvId,
    },
    Transfer {
        from: Option<UgvId>,
        to: UgvId,
        waypoint: [f64; 3],
    },
    ReturnHome {
        stage: HomeStage,
    },
    Landed,
}

impl MissionPhase {
    pub fn name(&self) -> &'static str {
        match self {
            MissionPhase::Idle => "idle",
            MissionPhase::Tracking { .. } => "tracking",
            MissionPhase::Searching { .. } => "searching",
            MissionPhase::Transfer { .. } => "transfer",
            MissionPhase::ReturnHome { .. } => "return_home",
            MissionPhase::Landed => "landed",
        }
    }
}

/// What the camera should be looking for in the current phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Ugv(UgvId),
    Home,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotEntry {
    pub name: String,
    /// Latest world-frame localization estimate.
    pub estimate: Pose,
    pub stamp: f64,
}

/// World-frame estimates of the ground vehicles plus the home location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRegistry {
    pub robots: Vec<RobotEntry>,
    pub home: Pose,
    pub home_tag: bool,
}

impl RobotRegistry {
    /// Every robot starts at the world origin at t = 0.
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>, home: Pose, home_tag: bool) -> Self {
        Self {
            robots: names
                .into_iter()
                .map(|n| RobotEntry {
                    name: n.into(),
                    estimate: Pose::identity(),
                    stamp: 0.0,
                })
                .collect(),
            home,
            home_tag,
        }
    }

    pub fn len(&self) -> usize {
        self.robots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    pub fn contains(&self, id: UgvId) -> bool {
        id < self.robots.len()
    }

    pub fn id_of(&self, name: &str) -> Option<UgvId> {
        self.robots.iter().position(|r| r.name == name)
    }

    pub fn name(&self, id: UgvId) -> Option<&str> {
        self.robots.get(id).map(|r| r.name.as_str())
    }

    pub fn estimate(&self, id: UgvId) -> Result<&Pose, MissionError> {
        self.robots
            .get(id)
            .map(|r| &r.estimate)
            .ok_or(MissionError::UnknownRobot(id))
    }

    pub fn update(&mut self, id: UgvId, estimate: Pose, stamp: f64) -> Result<(), MissionError> {
        let entry = self.robots.get_mut(id).ok_or(MissionError::UnknownRobot(id))?;
        entry.estimate = estimate;
        entry.stamp = stamp;
        Ok(())
    }
}

/// Position and heading target for the position controller. `velocity`
/// is a feed-forward for travelling setpoints and `remaining` the distance
/// left along the path; both are zero for hover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub position: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 3],
    pub remaining: f64,
}

impl Setpoint {
    pub fn hover(position: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position: position.into(),
            yaw,
            velocity: [0.0; 3],
            remaining: 0.0,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::from(self.velocity)
    }

    fn transformed(&self, t: &Pose) -> Self {
        Self {
            position: t.transform_point(&self.position()).into(),
            yaw: wrap_angle(self.yaw + t.yaw()),
            velocity: (t.rotation * self.velocity()).into(),
            remaining: self.remaining,
        }
    }
}

/// Hover target above the UGV seen at `rel` (UGV pose relative to the MAV
/// body) from the odometry pose `mav_est`.
///
/// Inside the on-station region (planar and vertical error within `r_max`,
/// heading within tolerance) the previous setpoint is kept; without one the
/// current pose is held.
pub fn compute_setpoint(rel: &Pose, mav_est: &Pose, previous: Option<&Setpoint>, cfg: &ServoConfig) -> Setpoint {
    hover_target(
        rel,
        mav_est,
        previous,
        cfg.r_max,
        cfg.yaw_tolerance,
        cfg.hover_height,
        cfg.offset_vector(),
    )
    .0
}

fn hover_target(
    rel: &Pose,
    mav_est: &Pose,
    previous: Option<&Setpoint>,
    radius: f64,
    yaw_tolerance: f64,
    height: f64,
    offset: Vector3<f64>,
) -> (Setpoint, bool) {
    let ugv_world = mav_est.compose(rel);
    let ugv_yaw = ugv_world.yaw();
    let heading = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), ugv_yaw);
    let target = ugv_world.translation + heading * offset + Vector3::new(0.0, 0.0, height);
    let here = mav_est.translation;
    let planar = (here.xy() - target.xy()).norm();
    let vertical = (here.z - target.z).abs();
    let yaw_err = wrap_angle(mav_est.yaw() - ugv_yaw).abs();
    if planar <= radius && vertical <= radius && yaw_err <= yaw_tolerance {
        let held = previous
            .copied()
            .unwrap_or_else(|| Setpoint::hover(here, mav_est.yaw()));
        (held, true)
    } else {
        (Setpoint::hover(target, ugv_yaw), false)
    }
}

/// The vehicle is hovering or moving steadily and the last solve converged.
pub fn is_stable(state: &MavState, attitude_rate: f64, cfg: &ServoConfig, solver_degraded: bool) -> bool {
    state.v.norm() <= cfg.max_speed && attitude_rate <= cfg.max_attitude_rate && !solver_degraded
}

/// Phase after a transfer request from the current phase.
pub fn request_transfer(
    phase: &MissionPhase,
    from: Option<UgvId>,
    to: UgvId,
    registry: &RobotRegistry,
    cfg: &ServoConfig,
) -> Result<MissionPhase, MissionError> {
    if !registry.contains(to) {
        return Err(MissionError::UnknownRobot(to));
    }
    if let Some(f) = from {
        if !registry.contains(f) {
            return Err(MissionError::UnknownRobot(f));
        }
    }
    match phase {
        MissionPhase::Transfer { .. } => Err(MissionError::TransferActive),
        MissionPhase::Tracking { ugv } if Some(*ugv) == from || from.is_none() => {
            if *ugv == to {
                return Ok(*phase);
            }
            Ok(transfer_phase(Some(*ugv), to, registry, cfg))
        }
        MissionPhase::Idle => Ok(transfer_phase(from, to, registry, cfg)),
        other => Err(MissionError::InvalidPhase(other.name().into())),
    }
}

fn transfer_phase(from: Option<UgvId>, to: UgvId, registry: &RobotRegistry, cfg: &ServoConfig) -> MissionPhase {
    let est = registry.robots[to].estimate.translation;
    MissionPhase::Transfer {
        from,
        to,
        waypoint: [est.x, est.y, est.z + cfg.transit_height],
    }
}

pub fn return_home(phase: &MissionPhase, registry: &RobotRegistry) -> Result<MissionPhase, MissionError> {
    let _ = registry;
    match phase {
        MissionPhase::ReturnHome { .. } | MissionPhase::Landed => Err(MissionError::AlreadyReturning),
        _ => Ok(MissionPhase::ReturnHome {
            stage: HomeStage::Transit,
        }),
    }
}

/// Inputs to one executive tick.
#[derive(Debug, Clone, Copy)]
pub struct MissionInput<'a> {
    pub time: f64,
    pub detection: Option<&'a Detection>,
    pub registry: &'a RobotRegistry,
    /// Odometry estimate `T_M^W`.
    pub mav_est: &'a Pose,
    /// Sensed state used for the stability gate.
    pub state: &'a MavState,
    pub attitude_rate: f64,
    pub solver_degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MissionEvent {
    PhaseChanged { from: MissionPhase, to: MissionPhase },
    FrameReset { ugv: UgvId, before: Pose, after: Pose },
    Arrived { to: Option<UgvId> },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MissionOutput {
    /// Newly emitted setpoint, `None` to hold the active one.
    pub command: Option<Setpoint>,
    /// Replacement odometry pose after a frame reset.
    pub reset: Option<Pose>,
    pub stable: bool,
    pub events: Vec<MissionEvent>,
}

/// Straight-line travelling setpoint advanced at a fixed speed.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Carrot {
    start: Vector3<f64>,
    end: Vector3<f64>,
    travelled: f64,
    yaw: f64,
}

impl Carrot {
    fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    fn done(&self) -> bool {
        self.travelled >= self.length()
    }

    fn setpoint(&self, speed: f64) -> Setpoint {
        let len = self.length();
        if len < 1e-9 || self.done() {
            return Setpoint::hover(self.end, self.yaw);
        }
        let dir = (self.end - self.start) / len;
        Setpoint {
            position: (self.start + dir * self.travelled).into(),
            yaw: self.yaw,
            velocity: (dir * speed).into(),
            remaining: len - self.travelled,
        }
    }

    fn transformed(&self, t: &Pose) -> Self {
        Self {
            start: t.transform_point(&self.start),
            end: t.transform_point(&self.end),
            travelled: self.travelled,
            yaw: wrap_angle(self.yaw + t.yaw()),
        }
    }
}

/// Stateful servoing executive.
#[derive(Debug, Clone)]
pub struct Mission {
    phase: MissionPhase,
    cfg: ServoConfig,
    t_c_m: Pose,
    /// Last emitted setpoint.
    active: Option<Setpoint>,
    /// Setpoint the executive wants; emitted once stable.
    desired: Option<Setpoint>,
    /// Deadband memory for the servo loop, cleared on phase changes.
    servo_hold: Option<Setpoint>,
    last_detection: Option<(f64, Pose)>,
    last_target_world: Option<Pose>,
    reset_pending: bool,
    carrot: Option<Carrot>,
    /// Time Searching began and the point searched over.
    search: Option<(f64, Vector3<f64>)>,
    last_time: Option<f64>,
}

impl Mission {
    pub fn new(cfg: ServoConfig, t_c_m: Pose) -> Self {
        Self {
            phase: MissionPhase::Idle,
            cfg,
            t_c_m,
            active: None,
            desired: None,
            servo_hold: None,
            last_detection: None,
            last_target_world: None,
            reset_pending: false,
            carrot: None,
            search: None,
            last_time: None,
        }
    }

    /// Starts by searching for `ugv` at the current position.
    pub fn start_searching(&mut self, ugv: UgvId, registry: &RobotRegistry) -> Result<(), MissionError> {
        if !registry.contains(ugv) {
            return Err(MissionError::UnknownRobot(ugv));
        }
        self.phase = MissionPhase::Searching { ugv };
        Ok(())
    }

    pub fn phase(&self) -> &MissionPhase {
        &self.phase
    }

    pub fn config(&self) -> &ServoConfig {
        &self.cfg
    }

    pub fn active_setpoint(&self) -> Option<&Setpoint> {
        self.active.as_ref()
    }

    pub fn set_offset(&mut self, offset: Vector3<f64>) {
        self.cfg.offset = offset.into();
        self.servo_hold = None;
    }

    /// Target the detector should look for in the current phase.
    pub fn detection_target(&self, registry: &RobotRegistry) -> Option<Target> {
        match self.phase {
            MissionPhase::Tracking { ugv } | MissionPhase::Searching { ugv } => Some(Target::Ugv(ugv)),
            MissionPhase::ReturnHome {
                stage: HomeStage::TagServo | HomeStage::Descend,
            } if registry.home_tag => Some(Target::Home),
            _ => None,
        }
    }

    fn set_phase(&mut self, to: MissionPhase, events: &mut Vec<MissionEvent>) {
        if to != self.phase {
            events.push(MissionEvent::PhaseChanged { from: self.phase, to });
            self.phase = to;
            self.servo_hold = None;
        }
    }

    fn fresh_detection(&self, now: f64) -> Option<Pose> {
        self.last_detection
            .filter(|(t, _)| now - t <= self.cfg.detection_timeout)
            .map(|(_, rel)| rel)
    }

    fn apply_reset(&mut self, new_est: &Pose, old_est: &Pose) {
        let delta = new_est.compose(&old_est.inverse());
        self.active = self.active.map(|s| s.transformed(&delta));
        self.desired = self.desired.map(|s| s.transformed(&delta));
        self.servo_hold = self.servo_hold.map(|s| s.transformed(&delta));
        self.carrot = self.carrot.map(|c| c.transformed(&delta));
        self.search = self.search.map(|(t, a)| (t, delta.transform_point(&a)));
        self.last_target_world = self.last_target_world.map(|p| delta.compose(&p));
    }

    /// Operator request: transfer to `to` from the vehicle currently tracked.
    /// Applies a frame reset on the tracked vehicle when a fresh detection is
    /// available. Returns the replacement odometry pose if one was computed.
    pub fn request_transfer(
        &mut self,
        to: UgvId,
        time: f64,
        registry: &RobotRegistry,
        mav_est: &Pose,
        events: &mut Vec<MissionEvent>,
    ) -> Result<Option<Pose>, MissionError> {
        let from = match self.phase {
            MissionPhase::Tracking { ugv } => Some(ugv),
            _ => None,
        };
        let next = request_transfer(&self.phase, from, to, registry, &self.cfg)?;
        if next == self.phase {
            return Ok(None);
        }
        let mut est = *mav_est;
        let mut reset = None;
        if let (Some(f), Some(rel)) = (from, self.fresh_detection(time)) {
            let after = reset_mav_world(registry.estimate(f)?, &rel);
            events.push(MissionEvent::FrameReset {
                ugv: f,
                before: *mav_est,
                after,
            });
            self.apply_reset(&after, mav_est);
            est = after;
            reset = Some(after);
        }
        if let MissionPhase::Transfer { waypoint, .. } = next {
            self.carrot = Some(Carrot {
                start: est.translation,
                end: Vector3::from(waypoint),
                travelled: 0.0,
                yaw: est.yaw(),
            });
        }
        self.set_phase(next, events);
        Ok(reset)
    }

    /// Operator request: fly home, optionally centre over the home tag,
    /// then land.
    pub fn request_return_home(
        &mut self,
        registry: &RobotRegistry,
        mav_est: &Pose,
        events: &mut Vec<MissionEvent>,
    ) -> Result<(), MissionError> {
        let next = return_home(&self.phase, registry)?;
        let home = registry.home.translation;
        self.carrot = Some(Carrot {
            start: mav_est.translation,
            end: home + Vector3::new(0.0, 0.0, self.cfg.transit_height),
            travelled: 0.0,
            yaw: mav_est.yaw(),
        });
        self.set_phase(next, events);
        Ok(())
    }

    /// One executive tick at the control rate.
    pub fn update(&mut self, input: &MissionInput<'_>) -> Result<MissionOutput, MissionError> {
        if let Some(last) = self.last_time {
            if input.time < last {
                return Err(MissionError::ClockRegression { now: input.time, last });
            }
        }
        let dt = self.last_time.map(|l| input.time - l).unwrap_or(0.0);
        self.last_time = Some(input.time);

        let stable = is_stable(input.state, input.attitude_rate, &self.cfg, input.solver_degraded);
        let mut out = MissionOutput {
            stable,
            ..MissionOutput::default()
        };
        let mut est = *input.mav_est;
        let registry = input.registry;

        let rel = input.detection.map(|d| relative_in_body(&self.t_c_m, &d.rel_camera));
        if let Some(r) = rel {
            self.last_detection = Some((input.time, r));
            self.last_target_world = Some(est.compose(&r));
        }

        match self.phase {
            MissionPhase::Idle | MissionPhase::Landed => {}
            MissionPhase::Searching { ugv } => {
                if rel.is_some() {
                    self.search = None;
                    self.reset_pending = true;
                    self.set_phase(MissionPhase::Tracking { ugv }, &mut out.events);
                    self.track(ugv, rel, input.time, stable, registry, &mut est, &mut out)?;
                } else {
                    let (since, anchor) = *self.search.get_or_insert((input.time, est.translation));
                    if input.time - since > self.cfg.detection_timeout {
                        let base = registry.estimate(ugv)?.translation.z;
                        self.desired = Some(Setpoint::hover(
                            Vector3::new(anchor.x, anchor.y, base + self.cfg.search_height),
                            est.yaw(),
                        ));
                    } else if self.desired.is_none() {
                        self.desired = Some(Setpoint::hover(anchor, est.yaw()));
                    }
                }
            }
            MissionPhase::Tracking { ugv } => {
                self.track(ugv, rel, input.time, stable, registry, &mut est, &mut out)?;
            }
            MissionPhase::Transfer { to, waypoint, .. } => {
                if let Some(c) = self.carrot.as_mut() {
                    if stable {
                        c.travelled = (c.travelled + self.cfg.transfer_speed * dt).min(c.length());
                    }
                    self.desired = Some(c.setpoint(self.cfg.transfer_speed));
                    let wp = Vector3::from(waypoint);
                    if c.done() && self.arrived(&est, &wp) {
                        out.events.push(MissionEvent::Arrived { to: Some(to) });
                        self.carrot = None;
                        // the target estimate is re-read only now
                        let target = registry.estimate(to)?.translation;
                        let anchor = Vector3::new(target.x, target.y, target.z + self.cfg.transit_height);
                        self.desired = Some(Setpoint::hover(anchor, est.yaw()));
                        self.search = Some((input.time, anchor));
                        self.set_phase(MissionPhase::Searching { ugv: to }, &mut out.events);
                    }
                }
            }
            MissionPhase::ReturnHome { stage } => {
                self.return_home_tick(stage, rel, dt, stable, registry, &est, &mut out);
            }
        }

        if stable && self.desired.is_some() && self.desired != self.active {
            self.active = self.desired;
            out.command = self.desired;
        }
        Ok(out)
    }

    fn arrived(&self, est: &Pose, wp: &Vector3<f64>) -> bool {
        let d = est.translation - wp;
        d.xy().norm() <= self.cfg.r_max && d.z.abs() <= self.cfg.r_max
    }

    #[allow(clippy::too_many_arguments)]
    fn track(
        &mut self,
        ugv: UgvId,
        rel: Option<Pose>,
        now: f64,
        stable: bool,
        registry: &RobotRegistry,
        est: &mut Pose,
        out: &mut MissionOutput,
    ) -> Result<(), MissionError> {
        match rel {
            Some(rel) => {
                if self.reset_pending && stable {
                    let after = reset_mav_world(registry.estimate(ugv)?, &rel);
                    out.events.push(MissionEvent::FrameReset {
                        ugv,
                        before: *est,
                        after,
                    });
                    self.apply_reset(&after, est);
                    *est = after;
                    out.reset = Some(after);
                    self.reset_pending = false;
                    self.last_target_world = Some(est.compose(&rel));
                }
                let sp = compute_setpoint(&rel, est, self.servo_hold.as_ref(), &self.cfg);
                self.servo_hold = Some(sp);
                self.desired = Some(sp);
            }
            None => {
                let last = self.last_detection.map(|(t, _)| t).unwrap_or(f64::NEG_INFINITY);
                if now - last > self.cfg.detection_timeout {
                    let target = self
                        .last_target_world
                        .map(|p| p.translation)
                        .unwrap_or(registry.estimate(ugv)?.translation);
                    self.desired = Some(Setpoint::hover(
                        Vector3::new(target.x, target.y, target.z + self.cfg.search_height),
                        est.yaw(),
                    ));
                    // lost target: climb straight away
                    self.search = Some((now - self.cfg.detection_timeout, target));
                    self.set_phase(MissionPhase::Searching { ugv }, &mut out.events);
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn return_home_tick(
        &mut self,
        stage: HomeStage,
        rel: Option<Pose>,
        dt: f64,
        stable: bool,
        registry: &RobotRegistry,
        est: &Pose,
        out: &mut MissionOutput,
    ) {
        let home = registry.home.translation;
        match stage {
            HomeStage::Transit => {
                if let Some(c) = self.carrot.as_mut() {
                    if stable {
                        c.travelled = (c.travelled + self.cfg.transfer_speed * dt).min(c.length());
                    }
                    self.desired = Some(c.setpoint(self.cfg.transfer_speed));
                    let end = c.end;
                    if c.done() && self.arrived(est, &end) {
                        out.events.push(MissionEvent::Arrived { to: None });
                        self.carrot = None;
                        let next = if registry.home_tag {
                            HomeStage::TagServo
                        } else {
                            HomeStage::Descend
                        };
                        self.set_phase(MissionPhase::ReturnHome { stage: next }, &mut out.events);
                    }
                }
            }
            HomeStage::TagServo => {
                if let Some(rel) = rel {
                    let height = self.cfg.hover_height;
                    let tol = self.cfg.landing_tolerance;
                    let (sp, held) = hover_target(
                        &rel,
                        est,
                        self.servo_hold.as_ref(),
                        tol,
                        f64::INFINITY,
                        height,
                        Vector3::zeros(),
                    );
                    // the pad has no preferred heading
                    let sp = if held { sp } else { Setpoint { yaw: est.yaw(), ..sp } };
                    let centred = held;
                    self.servo_hold = Some(sp);
                    self.desired = Some(sp);
                    if centred && stable {
                        self.set_phase(
                            MissionPhase::ReturnHome {
                                stage: HomeStage::Descend,
                            },
                            &mut out.events,
                        );
                        self.servo_hold = Some(sp);
                    }
                }
            }
            HomeStage::Descend => {
                let current = self
                    .desired
                    .unwrap_or_else(|| Setpoint::hover(est.translation, est.yaw()));
                let mut p = current.position();
                if let Some(rel) = rel.filter(|_| registry.home_tag) {
                    // keep centring on the tag while it stays in view
                    let tag = est.compose(&rel).translation;
                    if (est.translation.xy() - tag.xy()).norm() > self.cfg.landing_tolerance {
                        p.x = tag.x;
                        p.y = tag.y;
                    }
                }
                if stable {
                    p.z = (p.z - self.cfg.descent_speed * dt).max(home.z);
                }
                self.desired = Some(Setpoint::hover(p, current.yaw));
                if est.translation.z - home.z <= self.cfg.touchdown_height {
                    self.set_phase(MissionPhase::Landed, &mut out.events);
                }
            }
        }
    }
}
