use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Riccati weights and solution for the task-space double integrator.
///
/// `q` holds the diagonal of Q (position block first, then velocity block),
/// `r` the diagonal of R, and `p` the full `2n_t x 2n_t` solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CarePair {
    pub q: DVector<f64>,
    pub r: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl CarePair {
    pub fn task_dim(&self) -> usize {
        self.r.len()
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.q)
    }

    pub fn r_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.r)
    }
}

/// The fixed blocks `F_L = [[0, I], [0, 0]]` and `G_L = [[0], [I]]`.
pub fn double_integrator_blocks(task_dim: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = task_dim;
    let mut f = DMatrix::zeros(2 * n, 2 * n);
    let mut g = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        f[(i, n + i)] = 1.0;
        g[(n + i, i)] = 1.0;
    }
    (f, g)
}

/// Solves `F^T P + P F - P G R^-1 G^T P + Q = 0` for diagonal Q, R.
///
/// The blocks decouple per task axis; with `Q_i = diag(q1, q2)` and `R_i = r`
/// the stabilizing solution is `p2 = sqrt(q1 r)`, `p3 = sqrt(r (q2 + 2 p2))`,
/// `p1 = p2 p3 / r`.
pub fn solve_care_double_integrator(q: &DVector<f64>, r: &DVector<f64>) -> Result<CarePair> {
    let n = r.len();
    if q.len() != 2 * n {
        return Err(Error::Dimension(format!(
            "Q diagonal has {} entries, expected {}",
            q.len(),
            2 * n
        )));
    }
    for (i, &ri) in r.iter().enumerate() {
        if !(ri > 0.0) {
            return Err(Error::NonPositiveWeight {
                name: "R",
                index: i,
                value: ri,
            });
        }
    }
    for i in 0..n {
        if !(q[i] > 0.0) {
            return Err(Error::NonPositiveWeight {
                name: "Q",
                index: i,
                value: q[i],
            });
        }
        if !(q[n + i] >= 0.0) {
            return Err(Error::NonPositiveWeight {
                name: "Q",
                index: n + i,
                value: q[n + i],
            });
        }
    }

    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let (q1, q2, ri) = (q[i], q[n + i], r[i]);
        let p2 = (q1 * ri).sqrt();
        let p3 = (ri * (q2 + 2.0 * p2)).sqrt();
        let p1 = p2 * p3 / ri;
        p[(i, i)] = p1;
        p[(i, n + i)] = p2;
        p[(n + i, i)] = p2;
        p[(n + i, n + i)] = p3;
    }
    Ok(CarePair {
        q: q.clone(),
        r: r.clone(),
        p,
    })
}

/// Infinity-norm of the Riccati residual for an arbitrary candidate `p`.
pub fn care_residual(p: &DMatrix<f64>, q: &DVector<f64>, r: &DVector<f64>) -> f64 {
    let (f, g) = double_integrator_blocks(r.len());
    let r_inv = DMatrix::from_diagonal(&r.map(|x| 1.0 / x));
    let res = f.transpose() * p + p * &f - p * &g * r_inv * g.transpose() * p
        + DMatrix::from_diagonal(q);
    res.abs().max()
}
