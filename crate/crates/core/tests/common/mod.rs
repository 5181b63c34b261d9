#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix4};
use thirdview::frames::Pose;
use thirdview::mpc::{InputVec, MpcConfig, PredictionModel, StateVec, NU, NX};

/// Homogeneous matrix written out from the quaternion components.
pub fn matrix_of(p: &Pose) -> Matrix4<f64> {
    let [w, x, y, z] = p.quaternion_wxyz();
    let t = p.translation;
    Matrix4::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        t.x,
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        t.y,
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
        t.z,
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

pub fn max_abs(m: &Matrix4<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Linearisation of the discrete prediction step at hover by central
/// differences.
pub fn finite_difference_linearisation(
    model: &PredictionModel,
    x: &StateVec,
    u: &InputVec,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = 1e-6;
    let mut a = DMatrix::zeros(NX, NX);
    let mut b = DMatrix::zeros(NX, NU);
    for j in 0..NX {
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        let d = (model.step(&xp, u, 0.0) - model.step(&xm, u, 0.0)) / (2.0 * h);
        a.set_column(j, &d);
    }
    for j in 0..NU {
        let mut up = *u;
        let mut um = *u;
        up[j] += h;
        um[j] -= h;
        let d = (model.step(x, &up, 0.0) - model.step(x, &um, 0.0)) / (2.0 * h);
        b.set_column(j, &d);
    }
    (a, b)
}

/// First-step gain of the finite-horizon discrete LQR with the same
/// weights as the MPC objective.
pub fn riccati_first_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, cfg: &MpcConfig) -> DMatrix<f64> {
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&cfg.q)) * cfg.dt;
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&cfg.r)) * cfg.dt;
    let mut p = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&cfg.p));
    let mut k = DMatrix::zeros(NU, NX);
    for _ in 0..cfg.horizon {
        let s = &r + b.transpose() * &p * b;
        k = s.try_inverse().unwrap() * b.transpose() * &p * a;
        p = &q + a.transpose() * &p * (a - b * &k);
    }
    k
}
