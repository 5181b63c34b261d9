//! SE(3) poses and the frame chain between world `W`, MAV body `M`,
//! downward camera `C` and the ground vehicles `U`.
//!
//! Conventions used throughout the crate:
//!
//! * world is z-up, MAV body is x-forward / z-up;
//! * the camera z axis is the viewing axis, pointing down when the MAV is
//!   level (see [`Pose::downward_camera`]);
//! * a relative pose "`U` relative to `M`" is the pose of the UGV expressed
//!   in the MAV body frame, i.e. `T_U^M`. Composing it on the right of the
//!   MAV world pose yields the UGV world pose: `T_U^W = T_M^W ∘ T_U^M`.
//!
//! Rotations are stored as unit quaternions and re-normalised after every
//! composition.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rigid transform: translation in metres plus unit-quaternion rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self { translation, rotation }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// Translation plus a pure heading rotation about +z.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(
            Vector3::new(x, y, z),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        )
    }

    /// Translation plus ZYX Euler angles (`R = Rz(yaw) Ry(pitch) Rx(roll)`).
    pub fn from_xyz_rpy(translation: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(translation, UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// Quaternion given scalar-first, normalised on construction.
    pub fn from_parts_wxyz(t: [f64; 3], q: [f64; 4]) -> Self {
        Self::new(
            Vector3::from(t),
            UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])),
        )
    }

    /// Camera mounted at `offset` in the MAV body frame, looking straight down.
    ///
    /// Camera x coincides with body x; camera y and z are body -y and -z.
    pub fn downward_camera(offset: Vector3<f64>) -> Self {
        Self::new(offset, UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI))
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let rotation = self.rotation * other.rotation;
        Pose {
            translation: self.rotation * other.translation + self.translation,
            rotation: UnitQuaternion::new_normalize(rotation.into_inner()),
        }
    }

    pub fn inverse(&self) -> Pose {
        let rot_inv = self.rotation.inverse();
        Pose {
            translation: -(rot_inv * self.translation),
            rotation: rot_inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Heading about world z under the ZYX convention, in `(-π, π]`.
    pub fn yaw(&self) -> f64 {
        yaw_of(self)
    }

    /// Rotation angle of the relative rotation, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    /// Planar (x, y) distance between the two translations.
    pub fn planar_distance(&self, other: &Pose) -> f64 {
        (self.translation.xy() - other.translation.xy()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite()) && self.rotation.coords.iter().all(|v| v.is_finite())
    }

    /// `[w, x, y, z]`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        write!(f, "t=({:.3}, {:.3}, {:.3}) yaw={:.3}", t.x, t.y, t.z, self.yaw())
    }
}

#[derive(Serialize, Deserialize)]
struct PoseWire {
    t: [f64; 3],
    q: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PoseWire {
            t: [self.translation.x, self.translation.y, self.translation.z],
            q: self.quaternion_wxyz(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = PoseWire::deserialize(deserializer)?;
        let norm = wire.q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-9 {
            return Err(serde::de::Error::custom("pose quaternion has zero norm"));
        }
        if (norm - 1.0).abs() < 1e-12 {
            // already unit: keep the exact bits so logs round-trip
            let q = Quaternion::new(wire.q[0], wire.q[1], wire.q[2], wire.q[3]);
            return Ok(Pose::new(Vector3::from(wire.t), UnitQuaternion::new_unchecked(q)));
        }
        Ok(Pose::from_parts_wxyz(wire.t, wire.q))
    }
}

/// Frames taking part in the transform chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameId {
    World,
    Mav,
    Camera,
    Ugv(usize),
}

/// A timestamped relative transform `parent -> child`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StampedRelative {
    pub parent: FrameId,
    pub child: FrameId,
    pub pose: Pose,
    pub time: f64,
}

/// `a ∘ b`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(p: &Pose) -> Pose {
    p.inverse()
}

/// Pose of the UGV relative to the MAV body, from a camera-frame detection:
/// `T_U^M = T_C^M ∘ T_U^C`.
pub fn relative_in_body(t_c_m: &Pose, rel_camera: &Pose) -> Pose {
    t_c_m.compose(rel_camera)
}

/// Lifts a camera-frame detection into world coordinates through the MAV
/// odometry estimate and the camera extrinsic:
/// `T_M^W ∘ T_C^M ∘ T_U^C`.
///
/// The result is the UGV pose in the world as seen from the MAV.
pub fn relative_in_world(t_m_w: &Pose, t_c_m: &Pose, rel_camera: &Pose) -> Pose {
    t_m_w.compose(&t_c_m.compose(rel_camera))
}

/// Re-anchors the MAV world pose on a UGV localization estimate:
/// `T_M^W := T_U^W ∘ (T_U^M)^-1`, where `rel` is the UGV pose relative to the
/// MAV body. Composing the result with `rel` returns `t_u_w` exactly.
pub fn reset_mav_world(t_u_w: &Pose, rel: &Pose) -> Pose {
    t_u_w.compose(&rel.inverse())
}

/// Pose of UGV `j` expressed in the body frame of UGV `i`.
pub fn relative_between_ugvs(t_ui_w: &Pose, t_uj_w: &Pose) -> Pose {
    t_ui_w.inverse().compose(t_uj_w)
}

/// Heading about +z under the ZYX (yaw-pitch-roll) convention, in `(-π, π]`.
///
/// At |pitch| = 90° the heading is not unique; the value returned is
/// `atan2(R10, R00)` of whatever residual terms remain.
pub fn yaw_of(p: &Pose) -> f64 {
    let q = p.rotation.quaternion();
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let r10 = 2.0 * (x * y + w * z);
    let r00 = 1.0 - 2.0 * (y * y + z * z);
    wrap_angle(r10.atan2(r00))
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
