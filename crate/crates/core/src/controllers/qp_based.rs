use nalgebra::{DMatrix, DVector};

use super::{lie_terms_ctx, mu_ref, qp_log, warn_if_rank_deficient, CollocatedSplit, ControlStepLog, Reference, StepContext};
use crate::clf::{clf_row, ClfData};
use crate::error::Result;
use crate::linalg::{pinv, solve_qp, QpProblem, PINV_TOL};
use crate::multibody::{RobotModel, RobotState};
use crate::robots::GainSet;

/// CLF-QP over `x = [u; mu; delta]`: input-output linearization as an
/// equality, relaxed CLF decrease as an inequality, input bounds as bounds.
pub fn clf_qp_step(
    model: &RobotModel,
    state: &RobotState,
    reference: &Reference,
    gains: &GainSet,
    clf: &ClfData,
    prev_u: &DVector<f64>,
) -> Result<ControlStepLog> {
    let ctx = StepContext::new(model, state, reference)?;
    let (m, nt) = (model.m(), model.task_dim);
    let d = m + nt + 1;
    let (lf2y, a) = lie_terms_ctx(model, state, &ctx);
    warn_if_rank_deficient(&a);
    let a_pinv = pinv(&a, PINV_TOL);
    let mu_des = mu_ref(gains, &ctx.error);

    let mut h = DMatrix::zeros(d, d);
    let mut f = DVector::zeros(d);
    for i in 0..nt {
        h[(m + i, m + i)] = 2.0 * gains.w1;
        f[m + i] = -2.0 * gains.w1 * mu_des[i];
    }
    h[(d - 1, d - 1)] = 2.0 * gains.rho;

    // u - A^+ mu = A^+ (ddy_ref - Lf2y)
    let mut a_eq = DMatrix::zeros(m, d);
    a_eq.view_mut((0, 0), (m, m)).fill_with_identity();
    a_eq.view_mut((0, m), (m, nt)).copy_from(&(-&a_pinv));
    let b_eq = &a_pinv * (&reference.ddy - &lf2y);

    let (row, rhs) = clf_row(clf, &ctx.error);
    let mut a_in = DMatrix::zeros(1, d);
    a_in.view_mut((0, m), (1, nt + 1)).copy_from(&row.transpose());

    let mut lb = DVector::from_element(d, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(d, f64::INFINITY);
    lb.rows_mut(0, m).copy_from(&model.u_min);
    ub.rows_mut(0, m).copy_from(&model.u_max);
    lb[d - 1] = 0.0;

    let prob = QpProblem::new(h, f)
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, DVector::from_element(1, rhs))
        .with_bounds(lb, ub);
    let sol = solve_qp(&prob);
    let x = &sol.x_star;
    Ok(qp_log(
        model,
        clf,
        &ctx.error,
        &sol,
        x.rows(0, m).into_owned(),
        x.rows(m, nt).into_owned(),
        x[d - 1].max(0.0),
        prev_u,
    ))
}

/// Soft ID-CLF-QP over `x = [q''; u; delta]` with the dynamics imposed only
/// on the actuated subspace.
#[allow(clippy::too_many_arguments)]
pub fn soft_id_clf_qp_step(
    model: &RobotModel,
    state: &RobotState,
    reference: &Reference,
    gains: &GainSet,
    clf: &ClfData,
    split: &CollocatedSplit,
    prev_u: &DVector<f64>,
) -> Result<ControlStepLog> {
    id_qp_step(model, state, reference, gains, clf, split, prev_u, true)
}

/// The same program without the CLF row and relaxation.
#[allow(clippy::too_many_arguments)]
pub fn ic_qp_step(
    model: &RobotModel,
    state: &RobotState,
    reference: &Reference,
    gains: &GainSet,
    clf: &ClfData,
    split: &CollocatedSplit,
    prev_u: &DVector<f64>,
) -> Result<ControlStepLog> {
    id_qp_step(model, state, reference, gains, clf, split, prev_u, false)
}

#[allow(clippy::too_many_arguments)]
fn id_qp_step(
    model: &RobotModel,
    state: &RobotState,
    reference: &Reference,
    gains: &GainSet,
    clf: &ClfData,
    split: &CollocatedSplit,
    prev_u: &DVector<f64>,
    with_clf: bool,
) -> Result<ControlStepLog> {
    let ctx = StepContext::new(model, state, reference)?;
    let (n, m, nt) = (model.n(), model.m(), model.task_dim);
    let d = n + m + usize::from(with_clf);
    let j = &ctx.task.j;
    let nproj = &ctx.task.n;
    let mu_des = mu_ref(gains, &ctx.error);
    // mu = J q'' + c0
    let c0 = &ctx.task.dj * &state.dq - &reference.ddy;

    let mut h = DMatrix::zeros(d, d);
    let h_qq = (j.transpose() * j) * (2.0 * gains.w1) + nproj * (2.0 * gains.w4) + DMatrix::identity(n, n) * (2.0 * gains.w2);
    h.view_mut((0, 0), (n, n)).copy_from(&h_qq);
    for i in 0..m {
        h[(n + i, n + i)] = 2.0 * gains.w3;
    }
    let mut f = DVector::zeros(d);
    let f_q = j.transpose() * (&c0 - &mu_des) * (2.0 * gains.w1) + nproj * &state.dq * (2.0 * gains.w4 * gains.d_null);
    f.rows_mut(0, n).copy_from(&f_q);

    // S M q'' - u = -S h
    let mut a_eq = DMatrix::zeros(m, d);
    a_eq.view_mut((0, 0), (m, n)).copy_from(&(&split.s * &ctx.terms.m));
    a_eq.view_mut((0, n), (m, m)).copy_from(&(-DMatrix::identity(m, m)));
    let b_eq = -(&split.s * &ctx.h);

    let mut lb = DVector::from_element(d, f64::NEG_INFINITY);
    let mut ub = DVector::from_element(d, f64::INFINITY);
    lb.rows_mut(n, m).copy_from(&model.u_min);
    ub.rows_mut(n, m).copy_from(&model.u_max);

    let mut prob = QpProblem::new(h, f).with_equalities(a_eq, b_eq);
    if with_clf {
        h_delta(&mut prob, d - 1, gains.rho);
        let (row, rhs) = clf_row(clf, &ctx.error);
        let a1 = row.rows(0, nt);
        let mut a_in = DMatrix::zeros(1, d);
        a_in.view_mut((0, 0), (1, n)).copy_from(&(a1.transpose() * j));
        a_in[(0, d - 1)] = -1.0;
        let rhs = rhs - a1.dot(&c0);
        prob = prob.with_inequalities(a_in, DVector::from_element(1, rhs));
        lb[d - 1] = 0.0;
    }
    let prob = prob.with_bounds(lb, ub);
    let sol = solve_qp(&prob);
    let x = &sol.x_star;
    let ddq = x.rows(0, n);
    let mu = j * ddq + &c0;
    let delta = if with_clf { x[d - 1].max(0.0) } else { 0.0 };
    Ok(qp_log(model, clf, &ctx.error, &sol, x.rows(n, m).into_owned(), mu, delta, prev_u))
}

fn h_delta(prob: &mut QpProblem, k: usize, rho: f64) {
    prob.h[(k, k)] = 2.0 * rho;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clf::build_clf_identity;
    use crate::controllers::toys::full_arm;
    use crate::kinematics::forward_kinematics;
    use crate::linalg::QpStatus;
    use nalgebra::dvector;

    fn gains() -> GainSet {
        GainSet {
            kp: 100.0,
            eps: 0.05,
            w1: 1.0,
            w2: 0.01,
            w3: 0.01,
            w4: 0.1,
            rho: 1000.0,
            d_null: 1.0,
        }
    }

    #[test]
    fn converged_state_needs_no_input() {
        let arm = full_arm(0.0, 100.0);
        let s = RobotState::new(dvector![0.4, 0.3], DVector::zeros(2));
        let target = Reference::setpoint(forward_kinematics(&arm, &s.q));
        let g = gains();
        let clf = build_clf_identity(g.eps, 2).unwrap();
        let split = CollocatedSplit::new(&arm.b).unwrap();
        let prev = DVector::zeros(2);
        for log in [
            clf_qp_step(&arm, &s, &target, &g, &clf, &prev).unwrap(),
            soft_id_clf_qp_step(&arm, &s, &target, &g, &clf, &split, &prev).unwrap(),
            ic_qp_step(&arm, &s, &target, &g, &clf, &split, &prev).unwrap(),
        ] {
            assert_eq!(log.qp_status, Some(QpStatus::Optimal));
            assert!(log.u.amax() < 1e-10, "{:?}", log.u);
            assert!(log.delta.abs() < 1e-12);
            assert!(!log.held);
        }
    }

    #[test]
    fn inactive_clf_row_gives_reference_mu() {
        let arm = full_arm(9.81, 1e6);
        let s = RobotState::new(dvector![0.4, 0.3], dvector![0.1, -0.2]);
        let target = Reference::setpoint(dvector![0.3, -0.7]);
        let mut g = gains();
        g.eps = 10.0; // slow rate: decrease condition inactive
        let clf = build_clf_identity(g.eps, 2).unwrap();
        let log = clf_qp_step(&arm, &s, &target, &g, &clf, &DVector::zeros(2)).unwrap();
        let ctx = StepContext::new(&arm, &s, &target).unwrap();
        let expected = mu_ref(&g, &ctx.error);
        assert!((&log.mu - expected).amax() < 1e-8);
        assert_eq!(log.delta, 0.0);
    }

    #[test]
    fn decrease_condition_holds() {
        let arm = full_arm(9.81, 1e6);
        let s = RobotState::new(dvector![0.4, 0.3], dvector![0.5, -0.2]);
        let target = Reference::setpoint(dvector![0.3, -0.7]);
        let g = gains();
        let clf = build_clf_identity(0.01, 2).unwrap();
        let split = CollocatedSplit::new(&arm.b).unwrap();
        for log in [
            clf_qp_step(&arm, &s, &target, &g, &clf, &DVector::zeros(2)).unwrap(),
            soft_id_clf_qp_step(&arm, &s, &target, &g, &clf, &split, &DVector::zeros(2)).unwrap(),
        ] {
            assert!(log.vdot <= -log.v / clf.eps + log.delta + 1e-6);
        }
    }

    #[test]
    fn tight_bounds_saturate() {
        let arm = full_arm(9.81, 0.001);
        let s = RobotState::new(dvector![0.0, 0.0], DVector::zeros(2));
        let target = Reference::setpoint(dvector![0.5, -0.4]);
        let g = gains();
        let clf = build_clf_identity(g.eps, 2).unwrap();
        let log = clf_qp_step(&arm, &s, &target, &g, &clf, &DVector::zeros(2)).unwrap();
        assert!(log.saturated.iter().any(|&b| b));
        assert!(log.delta >= 0.0);
        assert!(log.u.iter().all(|v| v.abs() <= 0.001));
    }
}
