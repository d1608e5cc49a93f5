//! Dense linear-algebra utilities: pseudoinverse, the double-integrator
//! Riccati solution and a small dense QP solver.

mod care;
mod qp;

pub use care::{care_residual, double_integrator_blocks, solve_care_double_integrator, CarePair};
pub use qp::{solve_qp, QpProblem, QpSettings, QpSolution, QpStatus};

use nalgebra::DMatrix;

/// Default relative singular-value cutoff for [`pinv`].
pub const PINV_TOL: f64 = 1e-8;

/// Moore-Penrose pseudoinverse via SVD.
///
/// Singular values below `tol * sigma_max` are treated as zero. The zero
/// matrix maps to the (transposed) zero matrix.
pub fn pinv(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 || !smax.is_finite() {
        return DMatrix::zeros(n, m);
    }
    let cutoff = tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(n, m);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            // out += v_k * u_k^T / s
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out.ger(1.0 / s, &vk, &uk, 1.0);
        }
    }
    out
}

/// Numerical rank using the same cutoff convention as [`pinv`].
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Ratio of largest to smallest singular value (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let smin = sv.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}
