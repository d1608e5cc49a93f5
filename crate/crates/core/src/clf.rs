//! Rapidly exponentially stabilizing CLF on the task-error state
//! `eta = [e; de]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{double_integrator_blocks, solve_care_double_integrator, CarePair};

/// Task error `e = y - y_ref` and its rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskError {
    pub e: DVector<f64>,
    pub de: DVector<f64>,
}

impl TaskError {
    pub fn new(e: DVector<f64>, de: DVector<f64>) -> Self {
        assert_eq!(e.len(), de.len(), "error and rate dimensions differ");
        TaskError { e, de }
    }

    pub fn zeros(task_dim: usize) -> Self {
        TaskError::new(DVector::zeros(task_dim), DVector::zeros(task_dim))
    }

    pub fn task_dim(&self) -> usize {
        self.e.len()
    }

    pub fn eta(&self) -> DVector<f64> {
        let n = self.e.len();
        let mut eta = DVector::zeros(2 * n);
        eta.rows_mut(0, n).copy_from(&self.e);
        eta.rows_mut(n, n).copy_from(&self.de);
        eta
    }

    pub fn is_finite(&self) -> bool {
        self.e.iter().chain(self.de.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct ClfData {
    pub eps: f64,
    pub care: CarePair,
    /// `blockdiag(I/eps, I) P blockdiag(I/eps, I)`.
    pub p_eps: DMatrix<f64>,
    pub task_dim: usize,
    /// `F^T P_eps + P_eps F`, cached for `vdot_coeffs`.
    lyap: DMatrix<f64>,
}

/// Builds the CLF from diagonal CARE weights and the rate parameter.
pub fn build_clf(q: &DVector<f64>, r: &DVector<f64>, eps: f64, task_dim: usize) -> Result<ClfData> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::NonPositiveWeight {
            name: "eps",
            index: 0,
            value: eps,
        });
    }
    if r.len() != task_dim {
        return Err(Error::Dimension(format!(
            "R has {} entries for task dimension {task_dim}",
            r.len()
        )));
    }
    let care = solve_care_double_integrator(q, r)?;
    let n = task_dim;
    let scale = DVector::from_fn(2 * n, |i, _| if i < n { 1.0 / eps } else { 1.0 });
    let p_eps = DMatrix::from_fn(2 * n, 2 * n, |i, j| scale[i] * care.p[(i, j)] * scale[j]);
    let (f, _) = double_integrator_blocks(n);
    let lyap = f.transpose() * &p_eps + &p_eps * &f;
    Ok(ClfData {
        eps,
        care,
        p_eps,
        task_dim,
        lyap,
    })
}

/// CLF with identity CARE weights.
pub fn build_clf_identity(eps: f64, task_dim: usize) -> Result<ClfData> {
    build_clf(
        &DVector::from_element(2 * task_dim, 1.0),
        &DVector::from_element(task_dim, 1.0),
        eps,
        task_dim,
    )
}

fn check_dim(clf: &ClfData, eta: &TaskError) {
    assert_eq!(eta.task_dim(), clf.task_dim, "task error dimension mismatch");
}

/// `V = eta^T P_eps eta`.
pub fn clf_value(clf: &ClfData, eta: &TaskError) -> f64 {
    check_dim(clf, eta);
    let x = eta.eta();
    x.dot(&(&clf.p_eps * &x))
}

/// Splits `Vdot = a0 + a1 mu` along `deta = F eta + G mu`.
pub fn vdot_coeffs(clf: &ClfData, eta: &TaskError) -> (f64, DVector<f64>) {
    check_dim(clf, eta);
    let n = clf.task_dim;
    let x = eta.eta();
    let a0 = x.dot(&(&clf.lyap * &x));
    // 2 eta^T P_eps G selects the velocity columns of P_eps.
    let a1 = (clf.p_eps.columns(n, n).transpose() * &x) * 2.0;
    (a0, a1)
}

/// The relaxed decrease condition as one inequality row over `[mu; delta]`:
/// `a1 mu - delta <= -a0 - V / eps`.
pub fn clf_row(clf: &ClfData, eta: &TaskError) -> (DVector<f64>, f64) {
    let v = clf_value(clf, eta);
    let (a0, a1) = vdot_coeffs(clf, eta);
    let n = clf.task_dim;
    let mut row = DVector::zeros(n + 1);
    row.rows_mut(0, n).copy_from(&a1);
    row[n] = -1.0;
    (row, -a0 - v / clf.eps)
}
