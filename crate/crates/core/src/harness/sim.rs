//! Fixed-step simulation: plant at 100 Hz, detector, executive and MPC at
//! 20 Hz, ground-vehicle localization every 3 s.

use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::Command;
use crate::dynamics::{step_mav, step_ugv, ControlInput, DynamicsError, MavParams, MavState, UgvState};
use crate::frames::{wrap_angle, Pose};
use crate::harness::log::{
    write_record, CommandSource, DetectionSnapshot, LogRecord, MavSnapshot, Snapshot, UgvSnapshot, LOG_SCHEMA_VERSION,
};
use crate::harness::metrics::{MetricsAccumulator, RunMetrics};
use crate::harness::scenario::{Assertion, Scenario, ScenarioError, ScriptEvent};
use crate::mission::{
    Mission, MissionError, MissionEvent, MissionInput, MissionPhase, RobotRegistry, Setpoint, Target,
};
use crate::mpc::{MpcError, NmpcSolver, ReferenceTrajectory};
use crate::sensing::{detect, slam_pose, stream_rng, vio_step, SimRng, VioState};

pub const PLANT_RATE: u32 = 100;
pub const CONTROL_DIVIDER: u32 = 5;

const STREAM_DETECTOR: u64 = 1;
const STREAM_VIO: u64 = 2;
const STREAM_SLAM: u64 = 3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Mission(#[from] MissionError),
    #[error("writing log: {0}")]
    Io(#[from] std::io::Error),
    #[error("simulation already finished")]
    Finished,
}

/// MPC reference for a (possibly travelling) setpoint.
pub fn reference_for(sp: &Setpoint, params: &MavParams, horizon: usize, dt: f64) -> ReferenceTrajectory {
    let p0 = sp.position();
    let v = sp.velocity();
    let speed = v.norm();
    let mut positions = Vec::with_capacity(horizon + 1);
    let mut velocities = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        if speed > 0.0 {
            let travel = speed * k as f64 * dt;
            let adv = travel.min(sp.remaining);
            positions.push(p0 + v / speed * adv);
            velocities.push(if travel < sp.remaining { v } else { Vector3::zeros() });
        } else {
            positions.push(p0);
            velocities.push(Vector3::zeros());
        }
    }
    ReferenceTrajectory::from_positions(&positions, &velocities, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub assertion: Assertion,
    pub actual: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub assertions: Vec<AssertionResult>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

pub fn check_assertions(asserts: &[Assertion], metrics: &RunMetrics) -> Vec<AssertionResult> {
    asserts
        .iter()
        .map(|a| {
            let actual = metrics.get(&a.metric);
            AssertionResult {
                assertion: a.clone(),
                actual,
                passed: actual.is_some_and(|v| a.op.holds(v, a.value)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: u64,
    pub degraded: u64,
    pub iterations: u64,
}

pub struct Simulation {
    scenario: Scenario,
    tick: u64,
    end_tick: Option<u64>,
    slam_divider: u64,
    params: MavParams,
    mav: MavState,
    input: ControlInput,
    landed: bool,
    ugvs: Vec<UgvState>,
    vio: VioState,
    registry: RobotRegistry,
    mission: Mission,
    solver: NmpcSolver,
    t_c_m: Pose,
    det_rng: SimRng,
    vio_rng: SimRng,
    slam_rng: SimRng,
    hold: Setpoint,
    degraded: bool,
    prev_attitude: (f64, f64),
    last_detection: Option<DetectionSnapshot>,
    script: Vec<ScriptEvent>,
    script_pos: usize,
    queue: Vec<(Command, CommandSource)>,
    sink: Box<dyn Write + Send>,
    metrics: MetricsAccumulator,
    latest: Option<Snapshot>,
    ended: bool,
    stats: SolverStats,
}

fn tick_of(t: f64) -> u64 {
    (t * f64::from(PLANT_RATE) - 1e-9).ceil().max(0.0) as u64
}

impl Simulation {
    /// Builds the simulation and writes the log header. The run length is
    /// the scenario duration; see [`Simulation::unbounded`].
    pub fn new(scenario: &Scenario, sink: Box<dyn Write + Send>) -> Result<Self, SimError> {
        scenario.validate()?;
        let seed = scenario.seed;
        let params = scenario.mav_params;
        let start = Vector3::from(scenario.mav.position);
        let mav = MavState::hover_at(start, scenario.mav.yaw);
        let ugvs: Vec<UgvState> = scenario.ugvs.iter().map(|u| UgvState::from_pose(&u.pose())).collect();
        let registry = RobotRegistry::new(
            scenario.ugvs.iter().map(|u| u.id.clone()),
            scenario.home.pose(),
            scenario.home.tag,
        );
        let t_c_m = scenario.camera_mount();
        let mut mission = Mission::new(scenario.servo, t_c_m);
        if let Some(id) = &scenario.start_tracking {
            let idx = scenario.ugv_index(id).expect("validated");
            mission.start_searching(idx, &registry)?;
        }
        let solver = NmpcSolver::new(scenario.mpc.clone(), params)?;
        let mut script = scenario.events.clone();
        script.sort_by(|a, b| a.t.total_cmp(&b.t));
        let slam_divider = (f64::from(PLANT_RATE) / scenario.slam.update_rate).round().max(1.0) as u64;
        let mut sim = Self {
            scenario: scenario.clone(),
            tick: 0,
            end_tick: Some(tick_of(scenario.duration)),
            slam_divider,
            params,
            mav,
            input: ControlInput::hover(&params),
            landed: false,
            ugvs,
            vio: VioState::new(mav.pose(), scenario.vio),
            registry,
            mission,
            solver,
            t_c_m,
            det_rng: stream_rng(seed, STREAM_DETECTOR),
            vio_rng: stream_rng(seed, STREAM_VIO),
            slam_rng: stream_rng(seed, STREAM_SLAM),
            hold: Setpoint::hover(start, scenario.mav.yaw),
            degraded: false,
            prev_attitude: (0.0, 0.0),
            last_detection: None,
            script,
            script_pos: 0,
            queue: Vec::new(),
            sink,
            metrics: MetricsAccumulator::new(),
            latest: None,
            ended: false,
            stats: SolverStats::default(),
        };
        sim.emit(LogRecord::Header {
            v: LOG_SCHEMA_VERSION,
            seed,
            plant_rate: PLANT_RATE,
            control_divider: CONTROL_DIVIDER,
            slam_divider: slam_divider as u32,
            scenario: Box::new(scenario.clone()),
        })?;
        Ok(sim)
    }

    /// Runs until stopped instead of for the scenario duration.
    pub fn unbounded(mut self) -> Self {
        self.end_tick = None;
        self
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 / f64::from(PLANT_RATE)
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn plant_dt(&self) -> f64 {
        1.0 / f64::from(PLANT_RATE)
    }

    pub fn is_finished(&self) -> bool {
        self.ended
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn robot_ids(&self) -> Vec<String> {
        self.scenario.ugvs.iter().map(|u| u.id.clone()).collect()
    }

    pub fn phase(&self) -> &MissionPhase {
        self.mission.phase()
    }

    pub fn mav_state(&self) -> &MavState {
        &self.mav
    }

    pub fn vio(&self) -> &VioState {
        &self.vio
    }

    pub fn ugv_state(&self, idx: usize) -> Option<&UgvState> {
        self.ugvs.get(idx)
    }

    /// Latest control-tick snapshot.
    pub fn snapshot(&self) -> Option<&Snapshot> {
        self.latest.as_ref()
    }

    pub fn metrics(&self) -> RunMetrics {
        self.metrics.current()
    }

    pub fn solver_stats(&self) -> SolverStats {
        self.stats
    }

    /// Queues a command; it is applied at the next tick boundary.
    pub fn enqueue(&mut self, command: Command, source: CommandSource) {
        self.queue.push((command, source));
    }

    fn emit(&mut self, record: LogRecord) -> Result<(), SimError> {
        write_record(&mut self.sink, &record)?;
        self.metrics.push(&record);
        Ok(())
    }

    /// Advances one plant tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        if self.ended {
            return Err(SimError::Finished);
        }
        let n = self.tick;
        let t = self.time();
        if self.end_tick == Some(n) {
            self.emit(LogRecord::End { t, tick: n })?;
            self.sink.flush()?;
            self.ended = true;
            return Ok(());
        }
        while self.script_pos < self.script.len() && tick_of(self.script[self.script_pos].t) <= n {
            let cmd = self.script[self.script_pos].command.clone();
            self.queue.push((cmd, CommandSource::Script));
            self.script_pos += 1;
        }
        self.apply_commands(t, n)?;
        if n.is_multiple_of(self.slam_divider) {
            for i in 0..self.ugvs.len() {
                let est = slam_pose(&self.ugvs[i].pose(), &self.scenario.slam, &mut self.slam_rng);
                self.registry.update(i, est, t)?;
                self.emit(LogRecord::Slam {
                    t,
                    tick: n,
                    ugv: i,
                    estimate: est,
                })?;
            }
        }
        if n.is_multiple_of(u64::from(CONTROL_DIVIDER)) {
            self.control(t, n)?;
        }
        self.plant_step()?;
        self.tick += 1;
        Ok(())
    }

    /// Runs to the end of the scenario and returns the final metrics.
    pub fn run_to_end(&mut self) -> Result<RunMetrics, SimError> {
        if self.end_tick.is_none() {
            return Err(SimError::Finished);
        }
        while !self.ended {
            self.step()?;
        }
        Ok(self.metrics.clone().finish())
    }

    /// Ends the run at the current tick so the log is complete. Used when
    /// an unbounded session is stopped.
    pub fn finish(&mut self) -> Result<RunMetrics, SimError> {
        if !self.ended {
            self.end_tick = Some(self.tick);
            self.step()?;
        }
        Ok(self.metrics.clone().finish())
    }

    fn apply_commands(&mut self, t: f64, n: u64) -> Result<(), SimError> {
        if self.queue.is_empty() {
            return Ok(());
        }
        let queue = std::mem::take(&mut self.queue);
        for (i, (command, source)) in queue.iter().enumerate() {
            let key = command.key();
            if queue[i + 1..].iter().any(|(c, _)| c.key() == key) {
                self.emit(LogRecord::CommandSuperseded {
                    t,
                    tick: n,
                    source: *source,
                    command: command.clone(),
                })?;
                continue;
            }
            self.apply_command(command.clone(), *source, t, n)?;
        }
        Ok(())
    }

    fn reject(
        &mut self,
        command: Command,
        source: CommandSource,
        reason: String,
        t: f64,
        n: u64,
    ) -> Result<(), SimError> {
        self.emit(LogRecord::CommandRejected {
            t,
            tick: n,
            source,
            command,
            reason,
        })
    }

    fn apply_command(&mut self, command: Command, source: CommandSource, t: f64, n: u64) -> Result<(), SimError> {
        let ids = self.robot_ids();
        let command = match command.clone().validated(ids.iter().map(String::as_str)) {
            Ok(c) => c,
            Err(e) => return self.reject(command, source, e.to_string(), t, n),
        };
        let mut events = Vec::new();
        match &command {
            Command::Drive { ugv, linear, angular } => {
                let idx = self.registry.id_of(ugv).expect("validated");
                self.ugvs[idx].command(*linear, *angular);
            }
            Command::Transfer { to } => {
                let idx = self.registry.id_of(to).expect("validated");
                let est = self.vio.estimate;
                match self.mission.request_transfer(idx, t, &self.registry, &est, &mut events) {
                    Ok(Some(after)) => self.vio.reset_to(after),
                    Ok(None) => {}
                    Err(e) => return self.reject(command, source, e.to_string(), t, n),
                }
            }
            Command::ReturnHome => {
                let est = self.vio.estimate;
                if let Err(e) = self.mission.request_return_home(&self.registry, &est, &mut events) {
                    return self.reject(command, source, e.to_string(), t, n);
                }
            }
            Command::SetOffset { v } => self.mission.set_offset(Vector3::from(*v)),
            Command::InjectOffset { v } => {
                self.mav.p += Vector3::from(*v);
                self.vio.estimate = self.vio.drift.compose(&self.mav.pose());
            }
            Command::InjectVioDrift { v } => self.vio.inject_offset(Vector3::from(*v)),
        }
        self.emit(LogRecord::Command {
            t,
            tick: n,
            source,
            command,
        })?;
        self.emit_mission_events(events, t, n)
    }

    fn emit_mission_events(&mut self, events: Vec<MissionEvent>, t: f64, n: u64) -> Result<(), SimError> {
        for e in events {
            let rec = match e {
                MissionEvent::PhaseChanged { from, to } => LogRecord::Phase { t, tick: n, from, to },
                MissionEvent::FrameReset { ugv, before, after } => LogRecord::FrameReset {
                    t,
                    tick: n,
                    ugv,
                    before,
                    after,
                },
                MissionEvent::Arrived { to } => LogRecord::Arrival {
                    t,
                    tick: n,
                    to,
                    estimate: self.vio.estimate,
                    truth: self.mav.pose(),
                },
            };
            self.emit(rec)?;
        }
        Ok(())
    }

    fn sensed(&self) -> MavState {
        let est = self.vio.estimate;
        MavState {
            p: est.translation,
            v: self.vio.drift.rotation * self.mav.v,
            roll: self.mav.roll,
            pitch: self.mav.pitch,
            yaw: est.yaw(),
        }
    }

    fn control(&mut self, t: f64, n: u64) -> Result<(), SimError> {
        let truth = self.mav.pose();
        let ctrl_dt = f64::from(CONTROL_DIVIDER) / f64::from(PLANT_RATE);

        let mut detection = None;
        if !self.landed {
            if let Some(target) = self.mission.detection_target(&self.registry) {
                let (target_truth, cfg) = match target {
                    Target::Ugv(i) => (self.ugvs[i].pose(), &self.scenario.detector),
                    Target::Home => (self.registry.home, &self.scenario.home_detector),
                };
                if let Some(d) = detect(&truth, &target_truth, &self.t_c_m, cfg, t, &mut self.det_rng) {
                    self.emit(LogRecord::Detection {
                        t,
                        tick: n,
                        target,
                        rel_camera: d.rel_camera,
                        mav_truth: truth,
                        target_truth,
                    })?;
                    self.last_detection = Some(DetectionSnapshot {
                        t,
                        target,
                        rel_camera: d.rel_camera,
                    });
                    detection = Some(d);
                }
            }
        }

        let sensed = self.sensed();
        let attitude_rate =
            ((self.mav.roll - self.prev_attitude.0).powi(2) + (self.mav.pitch - self.prev_attitude.1).powi(2)).sqrt()
                / ctrl_dt;
        self.prev_attitude = (self.mav.roll, self.mav.pitch);

        let est = self.vio.estimate;
        let out = self.mission.update(&MissionInput {
            time: t,
            detection: detection.as_ref(),
            registry: &self.registry,
            mav_est: &est,
            state: &sensed,
            attitude_rate,
            solver_degraded: self.degraded,
        })?;
        if let Some(after) = out.reset {
            self.vio.reset_to(after);
        }
        let landed_now = out.events.iter().any(|e| {
            matches!(
                e,
                MissionEvent::PhaseChanged {
                    to: MissionPhase::Landed,
                    ..
                }
            )
        });
        self.emit_mission_events(out.events, t, n)?;
        if let Some(sp) = out.command {
            self.emit(LogRecord::Setpoint {
                t,
                tick: n,
                setpoint: sp,
                stable: out.stable,
                speed: sensed.v.norm(),
                attitude_rate,
                degraded: self.degraded,
            })?;
        }
        if landed_now && !self.landed {
            self.touch_down();
            self.emit(LogRecord::Landed {
                t,
                tick: n,
                truth: self.mav.pose(),
                home: self.registry.home,
            })?;
        }

        if !self.landed {
            let sensed = self.sensed();
            let sp = self.mission.active_setpoint().copied().unwrap_or(self.hold);
            let cfg = self.solver.config();
            let reference = reference_for(&sp, &self.params, cfg.horizon, cfg.dt);
            let sol = self.solver.solve(&sensed, &reference)?;
            self.stats.solves += 1;
            self.stats.iterations += sol.iterations as u64;
            if sol.degraded {
                self.stats.degraded += 1;
            }
            self.degraded = sol.degraded;
            let yaw_rate = (wrap_angle(sp.yaw - sensed.yaw) / self.params.yaw_time_constant)
                .clamp(-self.params.max_yaw_rate, self.params.max_yaw_rate);
            self.input = ControlInput {
                yaw_rate_cmd: yaw_rate,
                ..sol.input
            };
        }

        let snapshot = self.build_snapshot(t, n);
        self.latest = Some(snapshot.clone());
        self.emit(LogRecord::Snapshot(Box::new(snapshot)))
    }

    fn touch_down(&mut self) {
        self.landed = true;
        let ground = self.registry.home.translation.z;
        self.mav = MavState {
            p: Vector3::new(self.mav.p.x, self.mav.p.y, ground),
            v: Vector3::zeros(),
            roll: 0.0,
            pitch: 0.0,
            yaw: self.mav.yaw,
        };
        self.input = ControlInput {
            roll_cmd: 0.0,
            pitch_cmd: 0.0,
            thrust: 0.0,
            yaw_rate_cmd: 0.0,
        };
        self.vio.estimate = self.vio.drift.compose(&self.mav.pose());
    }

    fn plant_step(&mut self) -> Result<(), SimError> {
        let dt = self.plant_dt();
        if !self.landed {
            let before = self.mav.pose();
            self.mav = step_mav(&self.mav, &self.input, &self.params, dt)?;
            let increment = before.inverse().compose(&self.mav.pose());
            self.vio = vio_step(&self.vio, &increment, dt, &mut self.vio_rng);
        }
        for u in &mut self.ugvs {
            *u = step_ugv(u, dt);
        }
        Ok(())
    }

    fn build_snapshot(&self, t: f64, n: u64) -> Snapshot {
        Snapshot {
            t,
            tick: n,
            mav: MavSnapshot {
                truth: self.mav.pose(),
                estimate: self.vio.estimate,
                velocity: self.mav.v.into(),
                roll: self.mav.roll,
                pitch: self.mav.pitch,
                landed: self.landed,
            },
            ugvs: self
                .ugvs
                .iter()
                .zip(&self.registry.robots)
                .map(|(u, r)| UgvSnapshot {
                    id: r.name.clone(),
                    truth: u.pose(),
                    estimate: r.estimate,
                    linear: u.linear_cmd,
                    angular: u.angular_cmd,
                })
                .collect(),
            home: self.registry.home,
            phase: *self.mission.phase(),
            setpoint: self.mission.active_setpoint().copied(),
            offset: self.mission.config().offset,
            detection: self.last_detection.clone(),
            metrics: self.metrics.current(),
        }
    }
}

/// Runs a scenario to completion, writing the log to `sink`.
pub fn run_scenario(scenario: &Scenario, sink: Box<dyn Write + Send>) -> Result<RunOutcome, SimError> {
    let mut sim = Simulation::new(scenario, sink)?;
    let metrics = sim.run_to_end()?;
    let assertions = check_assertions(&scenario.asserts, &metrics);
    Ok(RunOutcome { metrics, assertions })
}

/// Runs a scenario and returns the log bytes alongside the outcome.
pub fn run_scenario_to_vec(scenario: &Scenario) -> Result<(RunOutcome, Vec<u8>), SimError> {
    let buf = SharedBuffer::default();
    let outcome = run_scenario(scenario, Box::new(buf.clone()))?;
    Ok((outcome, buf.take()))
}

/// Cloneable in-memory log sink.
#[derive(Debug, Clone, Default)]
pub struct SharedBuffer(std::sync::Arc<std::sync::Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn take(&self) -> Vec<u8> {
        std::mem::take(&mut *self.0.lock().expect("log buffer poisoned"))
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().expect("log buffer poisoned").extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
