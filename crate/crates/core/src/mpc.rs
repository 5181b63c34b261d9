//! Receding-horizon position controller.
//!
//! The outer loop of the cascade: a single-shooting nonlinear MPC over the
//! eight-dimensional translational state `[p, v, roll, pitch]` with inputs
//! `[roll_cmd, pitch_cmd, thrust]`. Heading is not part of the optimisation;
//! it is frozen at its current value over the horizon and regulated by a
//! separate rate loop.
//!
//! The optimiser is a projected descent method on the stacked input
//! sequence. Gradients come from an adjoint (backward) sweep through the
//! discrete prediction model. Search directions are the adjoint gradient
//! scaled by a Gauss-Newton metric on the free variables, bound-active
//! variables fall back to a diagonally scaled gradient step, and every step is
//! projected onto the input box and accepted by an Armijo backtracking test,
//! so each accepted iterate strictly lowers the cost.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{thrust_axis, ControlInput, MavParams, MavState};

pub const NX: usize = 8;
pub const NU: usize = 3;

pub type StateVec = SVector<f64, NX>;
pub type InputVec = SVector<f64, NU>;
pub type StateMat = SMatrix<f64, NX, NX>;
pub type InputMat = SMatrix<f64, NX, NU>;

#[derive(Debug, Error, PartialEq)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite initial state")]
    NonFiniteState,
}

/// Per-channel admissible input intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub roll: [f64; 2],
    pub pitch: [f64; 2],
    pub thrust: [f64; 2],
}

impl InputBox {
    pub fn from_params(params: &MavParams) -> Self {
        let lim = params.attitude_limit;
        Self {
            roll: [-lim, lim],
            pitch: [-lim, lim],
            thrust: [params.thrust_min, params.thrust_max],
        }
    }

    pub fn lower(&self) -> InputVec {
        InputVec::new(self.roll[0], self.pitch[0], self.thrust[0])
    }

    pub fn upper(&self) -> InputVec {
        InputVec::new(self.roll[1], self.pitch[1], self.thrust[1])
    }

    pub fn clamp(&self, u: &InputVec) -> InputVec {
        let lo = self.lower();
        let hi = self.upper();
        InputVec::from_fn(|i, _| u[i].clamp(lo[i], hi[i]))
    }

    pub fn contains(&self, u: &InputVec) -> bool {
        let lo = self.lower();
        let hi = self.upper();
        (0..NU).all(|i| u[i] >= lo[i] && u[i] <= hi[i])
    }

    /// Width of each channel, used to express tolerances relative to range.
    pub fn range(&self) -> InputVec {
        self.upper() - self.lower()
    }
}

/// Penalties, horizon, step and solver settings.
///
/// Penalty matrices are diagonal. The defaults are tuning values for the
/// default airframe, not identified quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// State-error weights for `[px, py, pz, vx, vy, vz, roll, pitch]`.
    pub q: [f64; NX],
    /// Input-error weights for `[roll_cmd, pitch_cmd, thrust]`.
    pub r: [f64; NU],
    /// Terminal state-error weights.
    pub p: [f64; NX],
    pub horizon: usize,
    pub dt: f64,
    /// Input box; derived from the airframe limits when absent.
    pub bounds: Option<InputBox>,
    pub max_iterations: usize,
    /// Relative cost decrease below which the solver stops.
    pub tolerance: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let q = [20.0, 20.0, 40.0, 5.0, 5.0, 5.0, 10.0, 10.0];
        Self {
            q,
            r: [4.0, 4.0, 0.1],
            p: q.map(|w| 5.0 * w),
            horizon: 20,
            dt: 0.05,
            bounds: None,
            max_iterations: 25,
            tolerance: 1e-7,
        }
    }
}

impl MpcConfig {
    pub fn input_box(&self, params: &MavParams) -> InputBox {
        self.bounds.unwrap_or_else(|| InputBox::from_params(params))
    }

    pub fn q_matrix(&self) -> StateMat {
        StateMat::from_diagonal(&StateVec::from(self.q))
    }

    pub fn r_matrix(&self) -> SMatrix<f64, NU, NU> {
        SMatrix::<f64, NU, NU>::from_diagonal(&InputVec::from(self.r))
    }

    pub fn p_matrix(&self) -> StateMat {
        StateMat::from_diagonal(&StateVec::from(self.p))
    }

    pub fn validate(&self, params: &MavParams) -> Result<(), MpcError> {
        let bad = |m: &str| Err(MpcError::InvalidConfig(m.to_string()));
        if self
            .q
            .iter()
            .chain(self.p.iter())
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return bad("state and terminal penalties must be positive semidefinite");
        }
        if self.r.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return bad("input penalty must be positive definite");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least one step");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("step must be positive");
        }
        let b = self.input_box(params);
        if (0..NU).any(|i| !(b.lower()[i] <= b.upper()[i])) {
            return bad("input box is empty");
        }
        if self.max_iterations == 0 || !(self.tolerance >= 0.0) {
            return bad("solver settings out of range");
        }
        Ok(())
    }
}

/// Per-step state targets and steady-state inputs over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub states: Vec<StateVec>,
    pub inputs: Vec<InputVec>,
}

impl ReferenceTrajectory {
    /// A fixed hover setpoint repeated over the horizon.
    pub fn hover(position: Vector3<f64>, params: &MavParams, horizon: usize) -> Self {
        Self::from_positions(
            &vec![position; horizon + 1],
            &vec![Vector3::zeros(); horizon + 1],
            params,
        )
    }

    /// Position and velocity targets for `horizon + 1` steps, level attitude,
    /// hover thrust as the steady-state input.
    pub fn from_positions(positions: &[Vector3<f64>], velocities: &[Vector3<f64>], params: &MavParams) -> Self {
        let states = positions
            .iter()
            .zip(velocities)
            .map(|(p, v)| pack_state(p, v, 0.0, 0.0))
            .collect::<Vec<_>>();
        let n = states.len().saturating_sub(1);
        Self {
            states,
            inputs: vec![InputVec::new(0.0, 0.0, params.hover_thrust()); n],
        }
    }

    fn check(&self, horizon: usize) -> Result<(), MpcError> {
        if self.states.len() != horizon + 1 || self.inputs.len() != horizon {
            return Err(MpcError::Dimension(format!(
                "reference has {} states / {} inputs, horizon is {}",
                self.states.len(),
                self.inputs.len(),
                horizon
            )));
        }
        Ok(())
    }
}

pub fn pack_state(p: &Vector3<f64>, v: &Vector3<f64>, roll: f64, pitch: f64) -> StateVec {
    StateVec::from([p.x, p.y, p.z, v.x, v.y, v.z, roll, pitch])
}

pub fn state_vector(s: &MavState) -> StateVec {
    pack_state(&s.p, &s.v, s.roll, s.pitch)
}

/// Discrete prediction model used inside the optimiser.
///
/// Attitude follows its command with the exact first-order response over a
/// step; translation uses the acceleration at the start of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionModel {
    pub mass: f64,
    pub gravity: f64,
    pub attitude_time_constant: f64,
    pub drag: f64,
    pub dt: f64,
}

impl PredictionModel {
    pub fn new(params: &MavParams, dt: f64) -> Self {
        Self {
            mass: params.mass,
            gravity: params.gravity,
            attitude_time_constant: params.attitude_time_constant,
            drag: params.drag,
            dt,
        }
    }

    fn attitude_decay(&self) -> f64 {
        (-self.dt / self.attitude_time_constant).exp()
    }

    fn acceleration(&self, x: &StateVec, thrust: f64, yaw: f64) -> Vector3<f64> {
        let v = Vector3::new(x[3], x[4], x[5]);
        thrust_axis(x[6], x[7], yaw) * (thrust / self.mass) - Vector3::new(0.0, 0.0, self.gravity) - v * self.drag
    }

    pub fn step(&self, x: &StateVec, u: &InputVec, yaw: f64) -> StateVec {
        let dt = self.dt;
        let a = self.acceleration(x, u[2], yaw);
        let alpha = self.attitude_decay();
        let mut next = *x;
        for i in 0..3 {
            next[i] = x[i] + dt * x[3 + i] + 0.5 * dt * dt * a[i];
            next[3 + i] = x[3 + i] + dt * a[i];
        }
        next[6] = alpha * x[6] + (1.0 - alpha) * u[0];
        next[7] = alpha * x[7] + (1.0 - alpha) * u[1];
        next
    }

    /// Jacobians `(∂x⁺/∂x, ∂x⁺/∂u)` of [`Self::step`].
    pub fn jacobians(&self, x: &StateVec, u: &InputVec, yaw: f64) -> (StateMat, InputMat) {
        let dt = self.dt;
        let (roll, pitch, thrust) = (x[6], x[7], u[2]);
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        let k = thrust / self.mass;
        let dn_droll = Vector3::new(-cy * sp * sr + sy * cr, -sy * sp * sr - cy * cr, -cp * sr);
        let dn_dpitch = Vector3::new(cy * cp * cr, sy * cp * cr, -sp * cr);
        let n = thrust_axis(roll, pitch, yaw);
        let alpha = self.attitude_decay();

        let mut a = StateMat::identity();
        let mut b = InputMat::zeros();
        for i in 0..3 {
            // position rows
            a[(i, 3 + i)] = dt - 0.5 * dt * dt * self.drag;
            a[(i, 6)] = 0.5 * dt * dt * k * dn_droll[i];
            a[(i, 7)] = 0.5 * dt * dt * k * dn_dpitch[i];
            b[(i, 2)] = 0.5 * dt * dt * n[i] / self.mass;
            // velocity rows
            a[(3 + i, 3 + i)] = 1.0 - dt * self.drag;
            a[(3 + i, 6)] = dt * k * dn_droll[i];
            a[(3 + i, 7)] = dt * k * dn_dpitch[i];
            b[(3 + i, 2)] = dt * n[i] / self.mass;
        }
        a[(6, 6)] = alpha;
        a[(7, 7)] = alpha;
        b[(6, 0)] = 1.0 - alpha;
        b[(7, 1)] = 1.0 - alpha;
        (a, b)
    }

    pub fn rollout(&self, x0: &StateVec, inputs: &[InputVec], yaw: f64) -> Vec<StateVec> {
        let mut xs = Vec::with_capacity(inputs.len() + 1);
        xs.push(*x0);
        for u in inputs {
            let next = self.step(xs.last().unwrap(), u, yaw);
            xs.push(next);
        }
        xs
    }
}

/// Discretised objective: stage terms weighted by the step length plus the
/// terminal term.
pub fn cost(
    states: &[StateVec],
    inputs: &[InputVec],
    reference: &ReferenceTrajectory,
    cfg: &MpcConfig,
) -> Result<f64, MpcError> {
    let n = cfg.horizon;
    if states.len() != n + 1 || inputs.len() != n {
        return Err(MpcError::Dimension(format!(
            "trajectory has {} states / {} inputs, horizon is {}",
            states.len(),
            inputs.len(),
            n
        )));
    }
    reference.check(n)?;
    Ok(cost_unchecked(states, inputs, reference, cfg))
}

fn cost_unchecked(states: &[StateVec], inputs: &[InputVec], reference: &ReferenceTrajectory, cfg: &MpcConfig) -> f64 {
    let n = cfg.horizon;
    let mut total = 0.0;
    for k in 0..n {
        let e = states[k] - reference.states[k];
        let w = inputs[k] - reference.inputs[k];
        let stage: f64 =
            (0..NX).map(|i| cfg.q[i] * e[i] * e[i]).sum::<f64>() + (0..NU).map(|i| cfg.r[i] * w[i] * w[i]).sum::<f64>();
        total += stage * cfg.dt;
    }
    let e = states[n] - reference.states[n];
    total + (0..NX).map(|i| cfg.p[i] * e[i] * e[i]).sum::<f64>()
}

/// Gradient of the rolled-out cost with respect to the input sequence,
/// computed by a backward adjoint sweep. Returns `(cost, gradient)`.
pub fn gradient(
    x0: &MavState,
    reference: &ReferenceTrajectory,
    cfg: &MpcConfig,
    params: &MavParams,
    inputs: &[InputVec],
) -> Result<(f64, Vec<InputVec>), MpcError> {
    if inputs.len() != cfg.horizon {
        return Err(MpcError::Dimension(format!(
            "{} inputs for horizon {}",
            inputs.len(),
            cfg.horizon
        )));
    }
    reference.check(cfg.horizon)?;
    let model = PredictionModel::new(params, cfg.dt);
    let xs = model.rollout(&state_vector(x0), inputs, x0.yaw);
    Ok(adjoint(&model, &xs, inputs, x0.yaw, reference, cfg))
}

fn adjoint(
    model: &PredictionModel,
    xs: &[StateVec],
    inputs: &[InputVec],
    yaw: f64,
    reference: &ReferenceTrajectory,
    cfg: &MpcConfig,
) -> (f64, Vec<InputVec>) {
    let n = cfg.horizon;
    let j = cost_unchecked(xs, inputs, reference, cfg);
    let mut grad = vec![InputVec::zeros(); n];
    let e_n = xs[n] - reference.states[n];
    let mut lambda = StateVec::from_fn(|i, _| 2.0 * cfg.p[i] * e_n[i]);
    for k in (0..n).rev() {
        let (a, b) = model.jacobians(&xs[k], &inputs[k], yaw);
        let w = inputs[k] - reference.inputs[k];
        grad[k] = InputVec::from_fn(|i, _| 2.0 * cfg.r[i] * w[i] * cfg.dt) + b.transpose() * lambda;
        let e = xs[k] - reference.states[k];
        lambda = StateVec::from_fn(|i, _| 2.0 * cfg.q[i] * e[i] * cfg.dt) + a.transpose() * lambda;
    }
    (j, grad)
}

/// Gauss-Newton approximation of the cost Hessian in the stacked inputs.
fn gauss_newton_hessian(
    model: &PredictionModel,
    xs: &[StateVec],
    inputs: &[InputVec],
    yaw: f64,
    cfg: &MpcConfig,
) -> DMatrix<f64> {
    let n = cfg.horizon;
    let dim = n * NU;
    // sens[i][k] = ∂x_i / ∂u_k for k < i
    let mut sens: Vec<Vec<InputMat>> = vec![Vec::with_capacity(n); n + 1];
    for k in 0..n {
        let (a, b) = model.jacobians(&xs[k], &inputs[k], yaw);
        let prev: Vec<InputMat> = sens[k].iter().map(|s| a * s).collect();
        sens[k + 1] = prev;
        sens[k + 1].push(b);
    }
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for (i, row) in sens.iter().enumerate().skip(1) {
        let weight = if i == n { &cfg.p } else { &cfg.q };
        let scale = if i == n { 1.0 } else { cfg.dt };
        let weighted: Vec<InputMat> = row
            .iter()
            .map(|s| InputMat::from_fn(|r, c| s[(r, c)] * weight[r] * scale))
            .collect();
        for l in 0..row.len() {
            for k in 0..=l {
                let block = row[k].transpose() * weighted[l];
                for r in 0..NU {
                    for c in 0..NU {
                        h[(k * NU + r, l * NU + c)] += 2.0 * block[(r, c)];
                    }
                }
            }
        }
    }
    for k in 0..n {
        for c in 0..NU {
            h[(k * NU + c, k * NU + c)] += 2.0 * cfg.r[c] * cfg.dt;
        }
    }
    // mirror upper triangle
    for r in 0..dim {
        for c in 0..r {
            h[(r, c)] = h[(c, r)];
        }
    }
    h
}

/// Result of one receding-horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// First input of the optimised sequence; yaw rate is left at zero.
    pub input: ControlInput,
    pub inputs: Vec<InputVec>,
    pub predicted: Vec<StateVec>,
    pub cost: f64,
    /// Cost of holding the steady-state input over the horizon.
    pub reference_input_cost: f64,
    pub iterations: usize,
    /// Set when the iteration budget ran out before convergence.
    pub degraded: bool,
}

/// One solver instance per controlled vehicle; keeps the previous solution
/// as a warm start.
#[derive(Debug, Clone)]
pub struct NmpcSolver {
    cfg: MpcConfig,
    params: MavParams,
    bounds: InputBox,
    model: PredictionModel,
    warm: Option<Vec<InputVec>>,
}

impl NmpcSolver {
    pub fn new(cfg: MpcConfig, params: MavParams) -> Result<Self, MpcError> {
        cfg.validate(&params)?;
        let bounds = cfg.input_box(&params);
        let model = PredictionModel::new(&params, cfg.dt);
        Ok(Self {
            cfg,
            params,
            bounds,
            model,
            warm: None,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn bounds(&self) -> &InputBox {
        &self.bounds
    }

    pub fn model(&self) -> &PredictionModel {
        &self.model
    }

    pub fn reset_warm_start(&mut self) {
        self.warm = None;
    }

    pub fn solve(&mut self, x0: &MavState, reference: &ReferenceTrajectory) -> Result<Solution, MpcError> {
        if !x0.is_finite() {
            return Err(MpcError::NonFiniteState);
        }
        let n = self.cfg.horizon;
        reference.check(n)?;
        let yaw = x0.yaw;
        let xs0 = state_vector(x0);
        let lo = self.bounds.lower();
        let hi = self.bounds.upper();

        let ref_inputs: Vec<InputVec> = reference.inputs.iter().map(|u| self.bounds.clamp(u)).collect();
        let ref_states = self.model.rollout(&xs0, &ref_inputs, yaw);
        let reference_input_cost = cost_unchecked(&ref_states, &ref_inputs, reference, &self.cfg);

        let mut us = ref_inputs.clone();
        let mut cost_now = reference_input_cost;
        if let Some(prev) = &self.warm {
            let mut shifted: Vec<InputVec> = prev.iter().skip(1).copied().collect();
            shifted.push(*prev.last().unwrap());
            let shifted: Vec<InputVec> = shifted.iter().map(|u| self.bounds.clamp(u)).collect();
            let xs = self.model.rollout(&xs0, &shifted, yaw);
            let c = cost_unchecked(&xs, &shifted, reference, &self.cfg);
            if c < cost_now {
                us = shifted;
                cost_now = c;
            }
        }

        let mut xs = self.model.rollout(&xs0, &us, yaw);
        let mut iterations = 0;
        let mut converged = false;
        let dim = n * NU;
        while iterations < self.cfg.max_iterations {
            let (_, grad) = adjoint(&self.model, &xs, &us, yaw, reference, &self.cfg);
            let g = DVector::from_iterator(dim, grad.iter().flat_map(|v| v.iter().copied()));
            let z = DVector::from_iterator(dim, us.iter().flat_map(|v| v.iter().copied()));
            let h = gauss_newton_hessian(&self.model, &xs, &us, yaw, &self.cfg);

            let bound_eps = 1e-12;
            let free: Vec<usize> = (0..dim)
                .filter(|&i| {
                    let c = i % NU;
                    let at_lo = z[i] <= lo[c] + bound_eps && g[i] > 0.0;
                    let at_hi = z[i] >= hi[c] - bound_eps && g[i] < 0.0;
                    !(at_lo || at_hi)
                })
                .collect();

            let mut scaled = DVector::<f64>::zeros(dim);
            for i in 0..dim {
                scaled[i] = -g[i] / h[(i, i)];
            }
            let mut newton = scaled.clone();
            if !free.is_empty() {
                let hff = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
                let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
                if let Some(chol) = hff.cholesky() {
                    let d = chol.solve(&gf);
                    for (k, &i) in free.iter().enumerate() {
                        newton[i] = d[k];
                    }
                }
            }

            let mut accepted = None;
            for dir in [&newton, &scaled] {
                accepted = self.line_search(&xs0, yaw, reference, &z, &g, dir, cost_now);
                if accepted.is_some() {
                    break;
                }
            }
            iterations += 1;
            match accepted {
                Some((cand, cand_xs, c)) => {
                    let improvement = cost_now - c;
                    us = cand;
                    xs = cand_xs;
                    cost_now = c;
                    if improvement <= self.cfg.tolerance * cost_now.max(1.0) {
                        converged = true;
                        break;
                    }
                }
                None => {
                    converged = true;
                    break;
                }
            }
        }

        self.warm = Some(us.clone());
        let first = us[0];
        Ok(Solution {
            input: ControlInput {
                roll_cmd: first[0],
                pitch_cmd: first[1],
                thrust: first[2],
                yaw_rate_cmd: 0.0,
            },
            inputs: us,
            predicted: xs,
            cost: cost_now,
            reference_input_cost,
            iterations,
            degraded: !converged,
        })
    }

    pub fn params(&self) -> &MavParams {
        &self.params
    }

    /// Armijo backtracking along the projection arc `P(z + α d)`.
    #[allow(clippy::too_many_arguments)]
    fn line_search(
        &self,
        xs0: &StateVec,
        yaw: f64,
        reference: &ReferenceTrajectory,
        z: &DVector<f64>,
        g: &DVector<f64>,
        dir: &DVector<f64>,
        cost_now: f64,
    ) -> Option<(Vec<InputVec>, Vec<StateVec>, f64)> {
        let n = self.cfg.horizon;
        let lo = self.bounds.lower();
        let hi = self.bounds.upper();
        let mut alpha = 1.0;
        for _ in 0..40 {
            let cand: Vec<InputVec> = (0..n)
                .map(|k| {
                    InputVec::from_fn(|c, _| {
                        let i = k * NU + c;
                        (z[i] + alpha * dir[i]).clamp(lo[c], hi[c])
                    })
                })
                .collect();
            let decrease: f64 = (0..n * NU).map(|i| g[i] * (cand[i / NU][i % NU] - z[i])).sum();
            if decrease < 0.0 {
                let cand_xs = self.model.rollout(xs0, &cand, yaw);
                let c = cost_unchecked(&cand_xs, &cand, reference, &self.cfg);
                if c <= cost_now + 1e-4 * decrease {
                    return Some((cand, cand_xs, c));
                }
            } else if decrease == 0.0 {
                return None;
            }
            alpha *= 0.5;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (MavParams, MpcConfig) {
        (MavParams::default(), MpcConfig::default())
    }

    #[test]
    fn cost_zero_at_reference() {
        let (params, cfg) = setup();
        let reference = ReferenceTrajectory::hover(Vector3::new(1.0, 2.0, 3.0), &params, cfg.horizon);
        let c = cost(&reference.states, &reference.inputs, &reference, &cfg).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn cost_single_position_error() {
        let params = MavParams::default();
        let cfg = MpcConfig {
            q: [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            p: [0.0; NX],
            horizon: 1,
            ..MpcConfig::default()
        };
        let reference = ReferenceTrajectory::hover(Vector3::zeros(), &params, 1);
        let mut states = reference.states.clone();
        states[0][0] = 0.3;
        states[0][2] = -0.4;
        let c = cost(&states, &reference.inputs, &reference, &cfg).unwrap();
        assert!((c - 0.25 * cfg.dt).abs() < 1e-15);
    }

    #[test]
    fn cost_rejects_mismatched_lengths() {
        let (params, cfg) = setup();
        let reference = ReferenceTrajectory::hover(Vector3::zeros(), &params, cfg.horizon);
        assert!(matches!(
            cost(&reference.states[..3], &reference.inputs, &reference, &cfg),
            Err(MpcError::Dimension(_))
        ));
    }

    #[test]
    fn gradient_vanishes_at_stationary_point() {
        let (params, cfg) = setup();
        let x0 = MavState::hover_at(Vector3::new(0.0, 0.0, 2.0), 0.3);
        let reference = ReferenceTrajectory::hover(x0.p, &params, cfg.horizon);
        let (_, g) = gradient(&x0, &reference, &cfg, &params, &reference.inputs).unwrap();
        assert!(g.iter().all(|v| v.norm() < 1e-10));
    }

    #[test]
    fn last_input_only_touches_tail_terms() {
        let (params, cfg) = setup();
        let model = PredictionModel::new(&params, cfg.dt);
        let x0 = MavState::hover_at(Vector3::new(0.2, 0.0, 1.8), 0.0);
        let mut us = vec![InputVec::new(0.01, -0.02, params.hover_thrust()); cfg.horizon];
        let xs = model.rollout(&state_vector(&x0), &us, 0.0);
        us[cfg.horizon - 1][1] += 0.1;
        let xs2 = model.rollout(&state_vector(&x0), &us, 0.0);
        for k in 0..cfg.horizon {
            assert_eq!(xs[k], xs2[k]);
        }
        assert_ne!(xs[cfg.horizon], xs2[cfg.horizon]);
    }

    #[test]
    fn hover_reference_returns_steady_input() {
        let (params, cfg) = setup();
        let mut solver = NmpcSolver::new(cfg.clone(), params).unwrap();
        let x0 = MavState::hover_at(Vector3::new(1.0, -1.0, 2.0), 0.5);
        let reference = ReferenceTrajectory::hover(x0.p, &params, cfg.horizon);
        let sol = solver.solve(&x0, &reference).unwrap();
        assert!(sol.input.roll_cmd.abs() < 1e-6);
        assert!(sol.input.pitch_cmd.abs() < 1e-6);
        assert!((sol.input.thrust - params.hover_thrust()).abs() < 1e-6);
        assert!(!sol.degraded);
    }

    #[test]
    fn far_reference_saturates_pitch() {
        let (params, cfg) = setup();
        let mut solver = NmpcSolver::new(cfg.clone(), params).unwrap();
        let x0 = MavState::hover_at(Vector3::new(0.0, 0.0, 2.0), 0.0);
        let reference = ReferenceTrajectory::hover(Vector3::new(20.0, 0.0, 2.0), &params, cfg.horizon);
        let sol = solver.solve(&x0, &reference).unwrap();
        let hi = solver.bounds().pitch[1];
        assert_eq!(sol.input.pitch_cmd, hi);
        assert!(sol.inputs.iter().all(|u| solver.bounds().contains(u)));
    }

    #[test]
    fn solve_never_worse_than_reference_input() {
        let (params, cfg) = setup();
        let mut solver = NmpcSolver::new(cfg.clone(), params).unwrap();
        let x0 = MavState {
            v: Vector3::new(0.3, -0.2, 0.1),
            roll: 0.05,
            ..MavState::hover_at(Vector3::new(0.5, 0.3, 1.5), 0.2)
        };
        let reference = ReferenceTrajectory::hover(Vector3::new(0.0, 0.0, 2.0), &params, cfg.horizon);
        for _ in 0..3 {
            let sol = solver.solve(&x0, &reference).unwrap();
            assert!(sol.cost <= sol.reference_input_cost);
        }
    }

    #[test]
    fn identical_histories_are_bit_identical() {
        let (params, cfg) = setup();
        let x0 = MavState::hover_at(Vector3::new(0.8, -0.4, 2.2), 0.1);
        let reference = ReferenceTrajectory::hover(Vector3::new(0.0, 0.0, 2.0), &params, cfg.horizon);
        let run = || {
            let mut solver = NmpcSolver::new(cfg.clone(), params).unwrap();
            let a = solver.solve(&x0, &reference).unwrap();
            let b = solver.solve(&x0, &reference).unwrap();
            (a, b)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        let params = MavParams::default();
        let mut cfg = MpcConfig::default();
        assert!(cfg.validate(&params).is_ok());
        cfg.r[2] = 0.0;
        assert!(cfg.validate(&params).is_err());
        let cfg = MpcConfig {
            horizon: 0,
            ..MpcConfig::default()
        };
        assert!(NmpcSolver::new(cfg, params).is_err());
        let cfg = MpcConfig {
            bounds: Some(InputBox {
                roll: [0.1, -0.1],
                pitch: [-0.1, 0.1],
                thrust: [0.0, 10.0],
            }),
            ..MpcConfig::default()
        };
        assert!(cfg.validate(&params).is_err());
    }
}
