//! Deterministic scenario runner, JSONL logs, metrics and replay.

pub mod log;
pub mod metrics;
pub mod replay;
pub mod scenario;
pub mod sim;

pub use log::{read_log, CommandSource, LogError, LogRecord, Snapshot, LOG_SCHEMA_VERSION};
pub use metrics::{compute_metrics, MetricsAccumulator, RunMetrics};
pub use replay::{Replay, ReplayStream};
pub use scenario::{Scenario, ScenarioError};
pub use sim::{run_scenario, run_scenario_to_vec, RunOutcome, SimError, Simulation};
