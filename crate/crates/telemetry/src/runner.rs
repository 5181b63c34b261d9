//! Real-time driver for one simulation.

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thirdview::command::Command;
use thirdview::harness::sim::CONTROL_DIVIDER;
use thirdview::harness::{CommandSource, RunMetrics, Scenario, SimError, Simulation, Snapshot};
use tokio::sync::watch;

use crate::protocol::ServerMessage;

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("simulation is no longer running")]
    Stopped,
    #[error("speed factor must be positive and finite, got {0}")]
    Speed(f64),
}

/// A snapshot with its wire encoding, shared by every session.
#[derive(Debug)]
pub struct Published {
    pub snapshot: Snapshot,
    pub text: Arc<str>,
}

/// Cheap, cloneable access to a running simulation.
#[derive(Clone)]
pub struct SimHandle {
    commands: mpsc::Sender<Command>,
    snapshots: watch::Receiver<Option<Arc<Published>>>,
    robots: Arc<[String]>,
}

impl SimHandle {
    /// Queues an already validated command for the next tick.
    pub fn send(&self, command: Command) -> Result<(), RunnerError> {
        self.commands.send(command).map_err(|_| RunnerError::Stopped)
    }

    pub fn subscribe(&self) -> watch::Receiver<Option<Arc<Published>>> {
        self.snapshots.clone()
    }

    pub fn latest(&self) -> Option<Arc<Published>> {
        self.snapshots.borrow().clone()
    }

    pub fn robots(&self) -> &[String] {
        &self.robots
    }
}

pub struct SimRunner {
    handle: SimHandle,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<RunMetrics, SimError>>>,
}

impl SimRunner {
    /// Starts the simulation thread. `speed` scales simulated time against
    /// wall time; the run continues past the scenario duration until
    /// [`SimRunner::stop`].
    pub fn start(scenario: &Scenario, log: Box<dyn Write + Send>, speed: f64) -> Result<Self, RunnerError> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(RunnerError::Speed(speed));
        }
        let mut sim = Simulation::new(scenario, log)?.unbounded();
        let robots: Arc<[String]> = sim.robot_ids().into();
        let (cmd_tx, cmd_rx) = mpsc::channel();
        let (snap_tx, snap_rx) = watch::channel(None);
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::Builder::new()
            .name("sim".into())
            .spawn(move || {
                let start = Instant::now();
                while !flag.load(Ordering::Relaxed) {
                    while let Ok(cmd) = cmd_rx.try_recv() {
                        sim.enqueue(cmd, CommandSource::Operator);
                    }
                    let control = sim.tick_count() % u64::from(CONTROL_DIVIDER) == 0;
                    sim.step()?;
                    if control {
                        if let Some(s) = sim.snapshot() {
                            let text = ServerMessage::Snapshot(Box::new(s.clone())).to_text();
                            snap_tx.send_replace(Some(Arc::new(Published {
                                snapshot: s.clone(),
                                text: text.into(),
                            })));
                        }
                    }
                    let due = start + Duration::from_secs_f64(sim.time() / speed);
                    if let Some(wait) = due.checked_duration_since(Instant::now()) {
                        std::thread::sleep(wait);
                    }
                }
                sim.finish()
            })
            .expect("spawn simulation thread");
        Ok(Self {
            handle: SimHandle {
                commands: cmd_tx,
                snapshots: snap_rx,
                robots,
            },
            stop,
            thread: Some(thread),
        })
    }

    pub fn handle(&self) -> SimHandle {
        self.handle.clone()
    }

    /// Stops the loop, closes the log and returns the session metrics.
    pub fn stop(mut self) -> Result<RunMetrics, RunnerError> {
        self.join()
    }

    fn join(&mut self) -> Result<RunMetrics, RunnerError> {
        self.stop.store(true, Ordering::Relaxed);
        match self.thread.take() {
            Some(t) => Ok(t.join().expect("simulation thread panicked")?),
            None => Err(RunnerError::Stopped),
        }
    }
}

impl Drop for SimRunner {
    fn drop(&mut self) {
        if self.thread.is_some() {
            let _ = self.join();
        }
    }
}
