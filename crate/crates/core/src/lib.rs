//! Aerial third-person-view teleoperation in simulation.
//!
//! A multirotor hovers above a ground vehicle and servos on camera
//! detections of it, giving the operator an overhead view. The crate holds
//! the pose chain ([`frames`]), plant models ([`dynamics`]), the NMPC
//! position controller ([`mpc`]), detector / odometry / localization noise
//! models ([`sensing`]), the servoing executive ([`mission`]) and a
//! deterministic scenario runner with logs and metrics ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod command;
pub mod dynamics;
pub mod frames;
pub mod harness;
pub mod mission;
pub mod mpc;
pub mod sensing;
