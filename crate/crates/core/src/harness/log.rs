//! JSONL run log: one record per line, header first, end marker last.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::Command;
use crate::frames::Pose;
use crate::harness::metrics::RunMetrics;
use crate::harness::scenario::Scenario;
use crate::mission::{MissionPhase, Setpoint, Target, UgvId};

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("log does not start with a header")]
    MissingHeader,
    #[error("log is truncated (no end record)")]
    Truncated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MavSnapshot {
    pub truth: Pose,
    pub estimate: Pose,
    pub velocity: [f64; 3],
    pub roll: f64,
    pub pitch: f64,
    pub landed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UgvSnapshot {
    pub id: String,
    pub truth: Pose,
    /// Latest localization estimate held by the registry.
    pub estimate: Pose,
    pub linear: f64,
    pub angular: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSnapshot {
    pub t: f64,
    pub target: Target,
    pub rel_camera: Pose,
}

/// Full simulation state at a control tick, as logged and as streamed to
/// operator clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub tick: u64,
    pub mav: MavSnapshot,
    pub ugvs: Vec<UgvSnapshot>,
    pub home: Pose,
    pub phase: MissionPhase,
    pub setpoint: Option<Setpoint>,
    pub offset: [f64; 3],
    pub detection: Option<DetectionSnapshot>,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Script,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        v: u32,
        seed: u64,
        plant_rate: u32,
        control_divider: u32,
        slam_divider: u32,
        scenario: Box<Scenario>,
    },
    Snapshot(Box<Snapshot>),
    Detection {
        t: f64,
        tick: u64,
        target: Target,
        rel_camera: Pose,
        mav_truth: Pose,
        target_truth: Pose,
    },
    Setpoint {
        t: f64,
        tick: u64,
        setpoint: Setpoint,
        stable: bool,
        speed: f64,
        attitude_rate: f64,
        degraded: bool,
    },
    Phase {
        t: f64,
        tick: u64,
        from: MissionPhase,
        to: MissionPhase,
    },
    FrameReset {
        t: f64,
        tick: u64,
        ugv: UgvId,
        before: Pose,
        after: Pose,
    },
    Command {
        t: f64,
        tick: u64,
        source: CommandSource,
        command: Command,
    },
    CommandRejected {
        t: f64,
        tick: u64,
        source: CommandSource,
        command: Command,
        reason: String,
    },
    CommandSuperseded {
        t: f64,
        tick: u64,
        source: CommandSource,
        command: Command,
    },
    Slam {
        t: f64,
        tick: u64,
        ugv: UgvId,
        estimate: Pose,
    },
    Arrival {
        t: f64,
        tick: u64,
        to: Option<UgvId>,
        estimate: Pose,
        truth: Pose,
    },
    Landed {
        t: f64,
        tick: u64,
        truth: Pose,
        home: Pose,
    },
    End {
        t: f64,
        tick: u64,
    },
}

impl LogRecord {
    /// Plant tick the record was produced at (`None` for the header).
    pub fn tick(&self) -> Option<u64> {
        match self {
            LogRecord::Header { .. } => None,
            LogRecord::Snapshot(s) => Some(s.tick),
            LogRecord::Detection { tick, .. }
            | LogRecord::Setpoint { tick, .. }
            | LogRecord::Phase { tick, .. }
            | LogRecord::FrameReset { tick, .. }
            | LogRecord::Command { tick, .. }
            | LogRecord::CommandRejected { tick, .. }
            | LogRecord::CommandSuperseded { tick, .. }
            | LogRecord::Slam { tick, .. }
            | LogRecord::Arrival { tick, .. }
            | LogRecord::Landed { tick, .. }
            | LogRecord::End { tick, .. } => Some(*tick),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LogRecord::Header { .. } => "header",
            LogRecord::Snapshot(_) => "snapshot",
            LogRecord::Detection { .. } => "detection",
            LogRecord::Setpoint { .. } => "setpoint",
            LogRecord::Phase { .. } => "phase",
            LogRecord::FrameReset { .. } => "frame_reset",
            LogRecord::Command { .. } => "command",
            LogRecord::CommandRejected { .. } => "command_rejected",
            LogRecord::CommandSuperseded { .. } => "command_superseded",
            LogRecord::Slam { .. } => "slam",
            LogRecord::Arrival { .. } => "arrival",
            LogRecord::Landed { .. } => "landed",
            LogRecord::End { .. } => "end",
        }
    }
}

pub fn write_record<W: Write + ?Sized>(w: &mut W, record: &LogRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")
}

/// Reads a complete log, checking the header version and the end marker.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<LogRecord>, LogError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            // check the version before parsing the rest of the header
            let raw: serde_json::Value = serde_json::from_str(&line).map_err(|e| LogError::Parse {
                line: 1,
                message: e.to_string(),
            })?;
            if raw.get("kind").and_then(|k| k.as_str()) != Some("header") {
                return Err(LogError::MissingHeader);
            }
            let found = raw.get("v").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
            if found != LOG_SCHEMA_VERSION {
                return Err(LogError::Version {
                    found,
                    expected: LOG_SCHEMA_VERSION,
                });
            }
        }
        let rec: LogRecord = serde_json::from_str(&line).map_err(|e| LogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    match records.first() {
        Some(LogRecord::Header { .. }) => {}
        _ => return Err(LogError::MissingHeader),
    }
    match records.last() {
        Some(LogRecord::End { .. }) => Ok(records),
        _ => Err(LogError::Truncated),
    }
}
