//! Ground-truth plants.
//!
//! The multirotor is a flat-earth point mass whose thrust is rotated by the
//! body attitude; roll and pitch track their commands through a first-order
//! lag standing in for the low-level attitude controller, and yaw follows a
//! direct rate command. The ground vehicle is a speed-limited unicycle.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{wrap_angle, Pose};

/// Maximum forward speed of the tracked ground vehicle, m/s.
pub const UGV_MAX_SPEED: f64 = 0.6;
/// Usual operating speed of the ground vehicle, m/s.
pub const UGV_NOMINAL_SPEED: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite MAV state")]
    NonFiniteState,
    #[error("non-finite control input")]
    NonFiniteInput,
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MavState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl MavState {
    pub fn hover_at(p: Vector3<f64>, yaw: f64) -> Self {
        Self {
            p,
            v: Vector3::zeros(),
            roll: 0.0,
            pitch: 0.0,
            yaw,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).all(|x| x.is_finite())
            && self.roll.is_finite()
            && self.pitch.is_finite()
            && self.yaw.is_finite()
    }

    /// Body pose in the world (ZYX attitude).
    pub fn pose(&self) -> Pose {
        Pose::from_xyz_rpy(self.p, self.roll, self.pitch, self.yaw)
    }

    /// Rebuilds position and heading from a pose, keeping velocity and tilt.
    pub fn with_pose(&self, pose: &Pose) -> Self {
        Self {
            p: pose.translation,
            yaw: pose.yaw(),
            ..*self
        }
    }
}

/// Commanded roll, pitch, collective thrust and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub roll_cmd: f64,
    pub pitch_cmd: f64,
    pub thrust: f64,
    pub yaw_rate_cmd: f64,
}

impl ControlInput {
    pub fn hover(params: &MavParams) -> Self {
        Self {
            roll_cmd: 0.0,
            pitch_cmd: 0.0,
            thrust: params.hover_thrust(),
            yaw_rate_cmd: 0.0,
        }
    }

    fn is_finite(&self) -> bool {
        self.roll_cmd.is_finite()
            && self.pitch_cmd.is_finite()
            && self.thrust.is_finite()
            && self.yaw_rate_cmd.is_finite()
    }
}

/// Physical parameters of the multirotor. Defaults describe a ~3 kg
/// hexacopter; they are illustrative, not measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MavParams {
    pub mass: f64,
    pub gravity: f64,
    pub attitude_time_constant: f64,
    pub yaw_time_constant: f64,
    pub attitude_limit: f64,
    pub max_yaw_rate: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub drag: f64,
}

impl Default for MavParams {
    fn default() -> Self {
        let mass = 2.9;
        let gravity = 9.81;
        Self {
            mass,
            gravity,
            attitude_time_constant: 0.15,
            yaw_time_constant: 0.5,
            attitude_limit: 30f64.to_radians(),
            max_yaw_rate: 1.0,
            thrust_min: 0.0,
            thrust_max: 2.0 * mass * gravity,
            drag: 0.1,
        }
    }
}

impl MavParams {
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mass > 0.0 && self.gravity > 0.0) {
            return Err("mass and gravity must be positive".into());
        }
        if !(self.attitude_time_constant > 0.0 && self.yaw_time_constant > 0.0) {
            return Err("time constants must be positive".into());
        }
        if !(self.attitude_limit > 0.0 && self.thrust_max > self.thrust_min) {
            return Err("attitude and thrust limits are empty".into());
        }
        if self.drag < 0.0 {
            return Err("drag must be non-negative".into());
        }
        Ok(())
    }
}

/// Unit thrust direction in the world for ZYX attitude `(roll, pitch, yaw)`.
pub fn thrust_axis(roll: f64, pitch: f64, yaw: f64) -> Vector3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Vector3::new(cy * sp * cr + sy * sr, sy * sp * cr - cy * sr, cp * cr)
}

#[derive(Clone, Copy)]
struct Deriv {
    dp: Vector3<f64>,
    dv: Vector3<f64>,
    droll: f64,
    dpitch: f64,
    dyaw: f64,
}

fn derivative(s: &MavState, u: &ControlInput, params: &MavParams) -> Deriv {
    let acc = thrust_axis(s.roll, s.pitch, s.yaw) * (u.thrust / params.mass)
        - Vector3::new(0.0, 0.0, params.gravity)
        - s.v * params.drag;
    Deriv {
        dp: s.v,
        dv: acc,
        droll: (u.roll_cmd - s.roll) / params.attitude_time_constant,
        dpitch: (u.pitch_cmd - s.pitch) / params.attitude_time_constant,
        dyaw: u.yaw_rate_cmd,
    }
}

fn advance(s: &MavState, d: &Deriv, h: f64) -> MavState {
    MavState {
        p: s.p + d.dp * h,
        v: s.v + d.dv * h,
        roll: s.roll + d.droll * h,
        pitch: s.pitch + d.dpitch * h,
        yaw: s.yaw + d.dyaw * h,
    }
}

/// Clamps the input into the admissible set of the plant.
pub fn clamp_input(u: &ControlInput, params: &MavParams) -> ControlInput {
    let lim = params.attitude_limit;
    ControlInput {
        roll_cmd: u.roll_cmd.clamp(-lim, lim),
        pitch_cmd: u.pitch_cmd.clamp(-lim, lim),
        thrust: u.thrust.clamp(params.thrust_min, params.thrust_max),
        yaw_rate_cmd: u.yaw_rate_cmd.clamp(-params.max_yaw_rate, params.max_yaw_rate),
    }
}

/// One RK4 step of the multirotor over `dt` seconds.
pub fn step_mav(s: &MavState, u: &ControlInput, params: &MavParams, dt: f64) -> Result<MavState, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::BadTimeStep(dt));
    }
    if !s.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    if !u.is_finite() {
        return Err(DynamicsError::NonFiniteInput);
    }
    let u = clamp_input(u, params);
    let k1 = derivative(s, &u, params);
    let k2 = derivative(&advance(s, &k1, dt / 2.0), &u, params);
    let k3 = derivative(&advance(s, &k2, dt / 2.0), &u, params);
    let k4 = derivative(&advance(s, &k3, dt), &u, params);
    let w = dt / 6.0;
    let next = MavState {
        p: s.p + (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp) * w,
        v: s.v + (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv) * w,
        roll: s.roll + (k1.droll + 2.0 * k2.droll + 2.0 * k3.droll + k4.droll) * w,
        pitch: s.pitch + (k1.dpitch + 2.0 * k2.dpitch + 2.0 * k3.dpitch + k4.dpitch) * w,
        yaw: wrap_angle(s.yaw + (k1.dyaw + 2.0 * k2.dyaw + 2.0 * k3.dyaw + k4.dyaw) * w),
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    Ok(next)
}

/// The measurement `y` handed to the controllers. The plant itself reports
/// ground truth; odometry error is layered on by the sensing models.
pub fn sensed_state(s: &MavState) -> MavState {
    *s
}

/// Planar ground vehicle with its commanded speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UgvState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub linear_cmd: f64,
    pub angular_cmd: f64,
}

impl UgvState {
    pub fn at(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading,
            linear_cmd: 0.0,
            angular_cmd: 0.0,
        }
    }

    pub fn from_pose(pose: &Pose) -> Self {
        Self::at(pose.translation.x, pose.translation.y, pose.yaw())
    }

    pub fn pose(&self) -> Pose {
        Pose::new(
            Vector3::new(self.x, self.y, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.heading),
        )
    }

    /// Sets the commanded speeds, saturating the forward speed.
    pub fn command(&mut self, linear: f64, angular: f64) {
        self.linear_cmd = clamp_ugv_speed(linear);
        self.angular_cmd = if angular.is_finite() { angular } else { 0.0 };
    }
}

/// Saturates a forward speed command to the vehicle limit.
pub fn clamp_ugv_speed(v: f64) -> f64 {
    if v.is_nan() {
        return 0.0;
    }
    v.clamp(-UGV_MAX_SPEED, UGV_MAX_SPEED)
}

/// Exact unicycle integration over `dt` with the clamped commands.
pub fn step_ugv(s: &UgvState, dt: f64) -> UgvState {
    let v = clamp_ugv_speed(s.linear_cmd);
    let w = s.angular_cmd;
    let (x, y, heading) = if w.abs() < 1e-9 {
        (
            s.x + v * dt * s.heading.cos(),
            s.y + v * dt * s.heading.sin(),
            s.heading,
        )
    } else {
        let h1 = s.heading + w * dt;
        (
            s.x + v / w * (h1.sin() - s.heading.sin()),
            s.y - v / w * (h1.cos() - s.heading.cos()),
            h1,
        )
    };
    UgvState {
        x,
        y,
        heading: wrap_angle(heading),
        linear_cmd: v,
        angular_cmd: w,
    }
}
