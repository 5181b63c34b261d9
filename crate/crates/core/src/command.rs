//! Operator and script commands. The same schema is used by scenario
//! event scripts, the JSONL log and the WebSocket protocol.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::clamp_ugv_speed;

/// Turn-rate limit applied to drive commands, rad/s.
pub const UGV_MAX_TURN_RATE: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Drive {
        ugv: String,
        linear: f64,
        angular: f64,
    },
    Transfer {
        to: String,
    },
    ReturnHome,
    SetOffset {
        v: [f64; 3],
    },
    /// Test hook: displaces the MAV (truth and odometry alike).
    InjectOffset {
        v: [f64; 3],
    },
    /// Test hook: adds a fixed error to the MAV odometry only.
    InjectVioDrift {
        v: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("malformed command: {0}")]
    Malformed(String),
    #[error("unknown robot id {0:?}")]
    UnknownRobot(String),
    #[error("command type {0:?} is not available to operators")]
    NotOperator(&'static str),
    #[error("non-finite value in command")]
    NonFinite,
}

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Command::Drive { .. } => "drive",
            Command::Transfer { .. } => "transfer",
            Command::ReturnHome => "return_home",
            Command::SetOffset { .. } => "set_offset",
            Command::InjectOffset { .. } => "inject_offset",
            Command::InjectVioDrift { .. } => "inject_vio_drift",
        }
    }

    /// Commands of the same key arriving within one tick supersede each
    /// other. Drive commands are keyed per vehicle.
    pub fn key(&self) -> String {
        match self {
            Command::Drive { ugv, .. } => format!("drive:{ugv}"),
            other => other.kind().to_string(),
        }
    }

    pub fn is_operator(&self) -> bool {
        !matches!(self, Command::InjectOffset { .. } | Command::InjectVioDrift { .. })
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Command::Drive { linear, angular, .. } => vec![*linear, *angular],
            Command::SetOffset { v } | Command::InjectOffset { v } | Command::InjectVioDrift { v } => v.to_vec(),
            _ => vec![],
        }
    }

    /// Range-clamps drive magnitudes to the plant limits.
    pub fn clamped(self) -> Self {
        match self {
            Command::Drive { ugv, linear, angular } => Command::Drive {
                ugv,
                linear: clamp_ugv_speed(linear),
                angular: angular.clamp(-UGV_MAX_TURN_RATE, UGV_MAX_TURN_RATE),
            },
            other => other,
        }
    }

    /// Robot ids referenced by the command.
    pub fn robot_ids(&self) -> Vec<&str> {
        match self {
            Command::Drive { ugv, .. } => vec![ugv.as_str()],
            Command::Transfer { to } => vec![to.as_str()],
            _ => vec![],
        }
    }

    /// Checks finiteness and ids, then clamps.
    pub fn validated<'a>(self, known_ids: impl IntoIterator<Item = &'a str> + Clone) -> Result<Self, CommandError> {
        if self.values().iter().any(|v| !v.is_finite()) {
            return Err(CommandError::NonFinite);
        }
        for id in self.robot_ids() {
            if !known_ids.clone().into_iter().any(|k| k == id) {
                return Err(CommandError::UnknownRobot(id.to_string()));
            }
        }
        Ok(self.clamped())
    }
}

/// Parses and validates an operator command from JSON.
pub fn validate_command<'a>(
    raw: &serde_json::Value,
    known_ids: impl IntoIterator<Item = &'a str> + Clone,
) -> Result<Command, CommandError> {
    let cmd: Command = serde_json::from_value(raw.clone()).map_err(|e| CommandError::Malformed(e.to_string()))?;
    if !cmd.is_operator() {
        return Err(CommandError::NotOperator(cmd.kind()));
    }
    cmd.validated(known_ids)
}
