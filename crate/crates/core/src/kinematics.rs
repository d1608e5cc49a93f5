//! End-effector position maps, Jacobian, Jacobian rate and null-space
//! projection.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::linalg::{pinv, PINV_TOL};
use crate::multibody::{ChainFrames, RobotModel, RobotState};

/// Task-space quantities at one state.
#[derive(Debug, Clone)]
pub struct TaskState {
    pub y: DVector<f64>,
    pub dy: DVector<f64>,
    pub j: DMatrix<f64>,
    pub dj: DMatrix<f64>,
    /// `I - J^+ J`.
    pub n: DMatrix<f64>,
}

impl TaskState {
    pub fn new(model: &RobotModel, state: &RobotState) -> Self {
        let frames = ChainFrames::new(model, &state.q);
        Self::with_frames(model, state, &frames)
    }

    pub(crate) fn with_frames(model: &RobotModel, state: &RobotState, frames: &ChainFrames) -> Self {
        let y = select(model, &frames.ee);
        let j = jacobian_with_frames(model, frames);
        let dj = jacobian_dot_with_frames(model, frames, &state.dq);
        let dy = &j * &state.dq;
        let n = null_projector(&j);
        TaskState { y, dy, j, dj, n }
    }
}

fn select(model: &RobotModel, p: &Vector3<f64>) -> DVector<f64> {
    DVector::from_iterator(model.task_dim, model.task_axes().iter().map(|&a| p[a]))
}

/// End-effector point in base coordinates (all three components).
pub fn end_effector_point(model: &RobotModel, q: &DVector<f64>) -> Vector3<f64> {
    ChainFrames::new(model, q).ee
}

/// Task-space end-effector position (`(x, z)` or `(x, y, z)`).
pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> DVector<f64> {
    select(model, &end_effector_point(model, q))
}

/// Positional Jacobian of the end effector restricted to the task rows.
pub fn jacobian(model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
    jacobian_with_frames(model, &ChainFrames::new(model, q))
}

fn jacobian_with_frames(model: &RobotModel, frames: &ChainFrames) -> DMatrix<f64> {
    let axes = model.task_axes();
    let n = model.n();
    let mut j = DMatrix::zeros(axes.len(), n);
    for k in 0..n {
        let col = frames.axis[k].cross(&(frames.ee - frames.origin[k]));
        for (r, &a) in axes.iter().enumerate() {
            j[(r, k)] = col[a];
        }
    }
    j
}

/// Time derivative of the Jacobian along `dq`, from the velocity recursion.
pub fn jacobian_dot(model: &RobotModel, q: &DVector<f64>, dq: &DVector<f64>) -> DMatrix<f64> {
    jacobian_dot_with_frames(model, &ChainFrames::new(model, q), dq)
}

fn jacobian_dot_with_frames(model: &RobotModel, frames: &ChainFrames, dq: &DVector<f64>) -> DMatrix<f64> {
    let n = model.n();
    let axes = model.task_axes();
    // omega_before[k]: angular velocity of the frame the k-th axis is fixed in.
    let mut omega_before = Vec::with_capacity(n);
    let mut origin_vel = Vec::with_capacity(n);
    let mut omega = Vector3::zeros();
    let mut o_prev = Vector3::zeros();
    let mut v_prev = Vector3::zeros();
    for k in 0..n {
        let v_o = v_prev + omega.cross(&(frames.origin[k] - o_prev));
        omega_before.push(omega);
        origin_vel.push(v_o);
        omega += frames.axis[k] * dq[k];
        o_prev = frames.origin[k];
        v_prev = v_o;
    }
    let v_ee = v_prev + omega.cross(&(frames.ee - o_prev));

    let mut dj = DMatrix::zeros(axes.len(), n);
    for k in 0..n {
        let z = frames.axis[k];
        let dz = omega_before[k].cross(&z);
        let col = dz.cross(&(frames.ee - frames.origin[k])) + z.cross(&(v_ee - origin_vel[k]));
        for (r, &a) in axes.iter().enumerate() {
            dj[(r, k)] = col[a];
        }
    }
    dj
}

/// Null-space projector `N = I - J^+ J`.
pub fn null_projector(j: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j.ncols();
    DMatrix::identity(n, n) - pinv(j, PINV_TOL) * j
}
