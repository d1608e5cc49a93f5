use nalgebra::{DMatrix, DVector};

use super::{saturation_mask, ControlStepLog, Reference, StepContext};
use crate::clf::{clf_value, vdot_coeffs, ClfData};
use crate::error::Result;
use crate::linalg::{pinv, PINV_TOL};
use crate::multibody::{RobotModel, RobotState};
use crate::robots::GainSet;

/// Damping added to `J M^-1 J^T` before inverting it.
pub const LAMBDA_REGULARIZATION: f64 = 1e-8;

struct TaskWrench {
    /// Joint torque `J^T f`.
    jt_f: DVector<f64>,
    /// Desired task error acceleration.
    mu: DVector<f64>,
}

fn task_wrench(model: &RobotModel, state: &RobotState, reference: &Reference, gains: &GainSet, ctx: &StepContext) -> TaskWrench {
    let j = &ctx.task.j;
    let nt = model.task_dim;
    let op = j * ctx.minv(&j.transpose()) + DMatrix::identity(nt, nt) * LAMBDA_REGULARIZATION;
    let lambda = op.clone().cholesky().map(|c| c.inverse()).unwrap_or_else(|| pinv(&op, PINV_TOL));
    let mu = -&ctx.error.de * gains.kd() - &ctx.error.e * gains.kp;
    let ddy = &reference.ddy + &mu;
    let h_task = pinv(j, PINV_TOL).transpose() * &ctx.terms.c_vec - &lambda * (&ctx.task.dj * &state.dq);
    let f = &lambda * ddy + h_task;
    TaskWrench {
        jt_f: j.transpose() * f,
        mu,
    }
}

fn finish(model: &RobotModel, clf: &ClfData, ctx: &StepContext, tau: DVector<f64>, mu: DVector<f64>) -> ControlStepLog {
    let u = model.clamp_input(&(pinv(&model.b, PINV_TOL) * tau));
    let v = clf_value(clf, &ctx.error);
    let (a0, a1) = vdot_coeffs(clf, &ctx.error);
    ControlStepLog {
        saturated: saturation_mask(model, &u),
        u,
        vdot: a0 + a1.dot(&mu),
        mu,
        delta: 0.0,
        v,
        qp_status: None,
        kkt_residual: 0.0,
        iterations: 0,
        solve_time: 0.0,
        held: false,
    }
}

/// Task-space impedance control with explicit cancellation of damping,
/// stiffness and gravity, clamped to the input bounds.
pub fn impedance_step(
    model: &RobotModel,
    state: &RobotState,
    reference: &Reference,
    gains: &GainSet,
    clf: &ClfData,
) -> Result<ControlStepLog> {
    let ctx = StepContext::new(model, state, reference)?;
    let w = task_wrench(model, state, reference, gains, &ctx);
    let tau = w.jt_f + &ctx.terms.d_vec + &ctx.terms.k_vec + &ctx.terms.g_vec;
    Ok(finish(model, clf, &ctx, tau, w.mu))
}

/// Impedance control with a null-space torque removing the part of
/// `J^T f` that the actuators cannot produce.
pub fn uic_step(
    model: &RobotModel,
    state: &RobotState,
    reference: &Reference,
    gains: &GainSet,
    clf: &ClfData,
) -> Result<ControlStepLog> {
    let ctx = StepContext::new(model, state, reference)?;
    let w = task_wrench(model, state, reference, gains, &ctx);
    let tau_null = uic_null_torque(&model.b, &ctx.task.n, &w.jt_f);
    let tau = w.jt_f + &ctx.task.n * tau_null + &ctx.terms.d_vec + &ctx.terms.k_vec + &ctx.terms.g_vec;
    Ok(finish(model, clf, &ctx, tau, w.mu))
}

/// `-[(I - I_p) N]^+ (I - I_p) J^T f` with `I_p = B^+ B`.
pub fn uic_null_torque(b: &DMatrix<f64>, nproj: &DMatrix<f64>, jt_f: &DVector<f64>) -> DVector<f64> {
    let n = b.nrows();
    let ip = b * pinv(b, PINV_TOL);
    let unact = DMatrix::identity(n, n) - ip;
    -pinv(&(&unact * nproj), PINV_TOL) * (&unact * jt_f)
}
