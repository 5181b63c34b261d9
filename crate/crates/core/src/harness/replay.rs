//! Re-emits logged snapshots at a chosen speed without re-simulating.

use std::io::BufRead;

use crate::harness::log::{read_log, LogError, LogRecord, Snapshot};
use crate::harness::metrics::{compute_metrics, RunMetrics};

#[derive(Debug, Clone)]
pub struct Replay {
    records: Vec<LogRecord>,
    snapshots: Vec<Snapshot>,
}

impl Replay {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, LogError> {
        Ok(Self::from_records(read_log(reader)?))
    }

    pub fn from_records(records: Vec<LogRecord>) -> Self {
        let snapshots = records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Snapshot(s) => Some((**s).clone()),
                _ => None,
            })
            .collect();
        Self { records, snapshots }
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn metrics(&self) -> Result<RunMetrics, LogError> {
        compute_metrics(&self.records)
    }

    /// Stream paced by wall-clock time; `speed` 0 pauses it.
    pub fn stream(&self, speed: f64) -> ReplayStream<'_> {
        ReplayStream {
            snapshots: &self.snapshots,
            speed: speed.max(0.0),
            cursor: 0,
            elapsed: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayStream<'a> {
    snapshots: &'a [Snapshot],
    speed: f64,
    cursor: usize,
    elapsed: f64,
}

impl<'a> ReplayStream<'a> {
    pub fn is_paused(&self) -> bool {
        self.speed == 0.0
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.snapshots.len()
    }

    pub fn set_speed(&mut self, speed: f64) {
        self.speed = speed.max(0.0);
    }

    /// Snapshots that became due after `wall_dt` more seconds of wall time.
    pub fn advance(&mut self, wall_dt: f64) -> &'a [Snapshot] {
        let Some(first) = self.snapshots.first() else {
            return &[];
        };
        if wall_dt > 0.0 {
            self.elapsed += wall_dt * self.speed;
        }
        let horizon = first.t + self.elapsed;
        let start = self.cursor;
        while self.cursor < self.snapshots.len() && self.snapshots[self.cursor].t <= horizon {
            self.cursor += 1;
        }
        &self.snapshots[start..self.cursor]
    }

    /// Simulated time until the next snapshot falls due, in wall seconds.
    pub fn wall_time_to_next(&self) -> Option<f64> {
        let next = self.snapshots.get(self.cursor)?;
        if self.speed == 0.0 {
            return None;
        }
        let first = self.snapshots.first()?.t;
        Some(((next.t - first - self.elapsed) / self.speed).max(0.0))
    }
}
