//! Scenario files (TOML) and the builtin scenarios.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::Command;
use crate::dynamics::MavParams;
use crate::frames::Pose;
use crate::mission::ServoConfig;
use crate::mpc::MpcConfig;
use crate::sensing::{DetectorConfig, SlamModel, VioNoise};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{source_name}:{line}:{column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown builtin scenario {0:?}")]
    UnknownBuiltin(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MavStart {
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

impl Default for MavStart {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, 2.0],
            yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UgvSpec {
    pub id: String,
    /// x, y, heading
    pub pose: [f64; 3],
}

impl UgvSpec {
    pub fn pose(&self) -> Pose {
        Pose::from_xyz_yaw(self.pose[0], self.pose[1], 0.0, self.pose[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomeSpec {
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    /// A visual tag marks the home pad.
    #[serde(default)]
    pub tag: bool,
}

impl Default for HomeSpec {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            yaw: 0.0,
            tag: false,
        }
    }
}

impl HomeSpec {
    pub fn pose(&self) -> Pose {
        let p = self.position;
        Pose::from_xyz_yaw(p[0], p[1], p[2], self.yaw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub t: f64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl CompareOp {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Eq => lhs == rhs,
            CompareOp::Ge => lhs >= rhs,
            CompareOp::Gt => lhs > rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Eq => "==",
            CompareOp::Ge => ">=",
            CompareOp::Gt => ">",
        }
    }
}

/// Embedded acceptance check on a metric of the finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub metric: String,
    pub op: CompareOp,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    /// Served scenarios ignore `duration` and run until stopped.
    #[serde(default)]
    pub interactive: bool,
    #[serde(default)]
    pub mav: MavStart,
    #[serde(rename = "ugv", default)]
    pub ugvs: Vec<UgvSpec>,
    #[serde(default)]
    pub home: HomeSpec,
    /// Vehicle searched for at start; the mission idles when absent.
    #[serde(default)]
    pub start_tracking: Option<String>,
    /// Camera mounting offset in the MAV body frame.
    #[serde(default)]
    pub camera_offset: [f64; 3],
    #[serde(default)]
    pub mav_params: MavParams,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    /// Detector used on the home tag.
    #[serde(default = "DetectorConfig::tag")]
    pub home_detector: DetectorConfig,
    #[serde(default)]
    pub vio: VioNoise,
    #[serde(default)]
    pub slam: SlamModel,
    #[serde(default)]
    pub servo: ServoConfig,
    #[serde(rename = "event", default)]
    pub events: Vec<ScriptEvent>,
    #[serde(rename = "assert", default)]
    pub asserts: Vec<Assertion>,
}

const BUILTINS: [(&str, &str); 5] = [
    ("tracking", include_str!("../../scenarios/tracking.toml")),
    ("ten-transfers", include_str!("../../scenarios/ten-transfers.toml")),
    (
        "displacement-recovery",
        include_str!("../../scenarios/displacement-recovery.toml"),
    ),
    ("return-home-tag", include_str!("../../scenarios/return-home-tag.toml")),
    (
        "return-home-notag",
        include_str!("../../scenarios/return-home-notag.toml"),
    ),
];

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

impl Scenario {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTINS.iter().map(|(n, _)| *n)
    }

    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ScenarioError::UnknownBuiltin(name.to_string()))?;
        Self::from_toml_named(text, &format!("builtin:{name}"))
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Self::from_toml_named(text, "<scenario>")
    }

    fn from_toml_named(text: &str, source_name: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
            ScenarioError::Parse {
                source_name: source_name.to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Loads `builtin:<name>` or a TOML file path.
    pub fn load(spec: &str) -> Result<Self, ScenarioError> {
        if let Some(name) = spec.strip_prefix("builtin:") {
            return Self::builtin(name);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: spec.to_string(),
            source,
        })?;
        Self::from_toml_named(&text, spec)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn ugv_index(&self, id: &str) -> Option<usize> {
        self.ugvs.iter().position(|u| u.id == id)
    }

    pub fn camera_mount(&self) -> Pose {
        Pose::downward_camera(Vector3::from(self.camera_offset))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return bad("duration must be positive".into());
        }
        for (i, u) in self.ugvs.iter().enumerate() {
            if self.ugvs[..i].iter().any(|o| o.id == u.id) {
                return bad(format!("duplicate robot id {:?}", u.id));
            }
            if u.pose.iter().any(|v| !v.is_finite()) {
                return bad(format!("robot {:?} has a non-finite pose", u.id));
            }
        }
        if let Some(id) = &self.start_tracking {
            if self.ugv_index(id).is_none() {
                return bad(format!("start_tracking refers to unknown robot {id:?}"));
            }
        }
        for e in &self.events {
            if !(e.t >= 0.0 && e.t <= self.duration) {
                return bad(format!("event at t={} lies outside the run", e.t));
            }
            for id in e.command.robot_ids() {
                if self.ugv_index(id).is_none() {
                    return bad(format!("event at t={} refers to unknown robot {id:?}", e.t));
                }
            }
        }
        self.mav_params.validate().map_err(ScenarioError::Invalid)?;
        self.mpc
            .validate(&self.mav_params)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.detector.validate().map_err(ScenarioError::Invalid)?;
        self.home_detector.validate().map_err(ScenarioError::Invalid)?;
        self.servo.validate().map_err(ScenarioError::Invalid)?;
        let h = self.servo.hover_height;
        if h < self.detector.min_height || h > self.detector.max_height {
            return bad(format!(
                "hover height {h} outside the detector window [{}, {}]",
                self.detector.min_height, self.detector.max_height
            ));
        }
        if !(self.slam.update_rate > 0.0 && self.slam.sigma >= 0.0) {
            return bad("slam model needs a positive rate and non-negative sigma".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for name in Scenario::builtin_names() {
            Scenario::builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn parse_error_has_line_number() {
        let text = "name = \"x\"\nduration = 10.0\nseed = \"oops\"\n";
        match Scenario::from_toml(text) {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_robot_in_event_rejected() {
        let text = r#"
name = "x"
duration = 10.0
[[ugv]]
id = "a"
pose = [0, 0, 0]
[[event]]
t = 1.0
type = "transfer"
to = "b"
"#;
        assert!(matches!(Scenario::from_toml(text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(Scenario::from_toml("name = \"x\"\nduration = 0.0\n").is_err());
    }
}
