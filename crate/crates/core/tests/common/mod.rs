//! Helpers shared by the integration tests: seeded random states and
//! finite-difference oracles.

#![allow(dead_code)]

pub mod measure;
pub mod qp;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softclf::multibody::{RobotModel, RobotState};
use softclf::robots::{builtin, Robot};

pub const ROBOTS: [&str; 3] = ["finger", "helix", "spirob"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn robot(name: &str) -> Robot {
    builtin(name).unwrap_or_else(|e| panic!("built-in robot {name}: {e}"))
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, amp: f64) -> DVector<f64> {
    if amp == 0.0 {
        return DVector::zeros(n);
    }
    DVector::from_fn(n, |_, _| rng.random_range(-amp..amp))
}

/// Random state with joint angles within `q_amp` rad and rates within
/// `dq_amp` rad/s; small angles keep ball joints away from gimbal lock.
pub fn random_state(rng: &mut impl Rng, model: &RobotModel, q_amp: f64, dq_amp: f64) -> RobotState {
    let n = model.n();
    RobotState::new(uniform_vec(rng, n, q_amp), uniform_vec(rng, n, dq_amp))
}

/// Central difference of a vector-valued function along each coordinate.
pub fn fd_jacobian(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let rows = f(x).len();
    let mut out = DMatrix::zeros(rows, x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        out.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    out
}

/// Central difference of a scalar function.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |k, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

/// `||a - b|| / max(||b||, floor)`.
pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}
