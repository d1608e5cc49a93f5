//! Scalar measurements shared by the property tests and the acceptance run.

use nalgebra::DVector;
use rand::Rng;
use softclf::controllers::{io_linearizing_u, Reference};
use softclf::kinematics::{forward_kinematics, jacobian, jacobian_dot};
use softclf::multibody::{energy, RobotModel, RobotState};
use softclf::sim::{step, Integrator, SimConfig};

use super::{fd_jacobian, random_state, rel_err_mat, rng, robot};

/// Worst relative error of the analytic Jacobian against central
/// differences of forward kinematics over `states` random states.
pub fn worst_jacobian_error(model: &RobotModel, rng: &mut impl Rng, states: usize) -> f64 {
    (0..states)
        .map(|_| {
            let s = random_state(rng, model, 0.4, 1.0);
            let j = jacobian(model, &s.q);
            let j_fd = fd_jacobian(|q| forward_kinematics(model, q), &s.q, 1e-6);
            rel_err_mat(&j, &j_fd, 1e-3)
        })
        .fold(0.0, f64::max)
}

/// Worst relative error of `J'` against central differences of `J` along
/// `q'`.
pub fn worst_jacobian_rate_error(model: &RobotModel, rng: &mut impl Rng, states: usize) -> f64 {
    (0..states)
        .map(|_| {
            let s = random_state(rng, model, 0.4, 1.0);
            let dj = jacobian_dot(model, &s.q, &s.dq);
            let h = 1e-6;
            let jp = jacobian(model, &(&s.q + &s.dq * h));
            let jm = jacobian(model, &(&s.q - &s.dq * h));
            rel_err_mat(&dj, &((jp - jm) / (2.0 * h)), 1e-3)
        })
        .fold(0.0, f64::max)
}

/// Relative change of total energy over 1 s of undamped, unforced motion
/// (RK4, dt 1e-4) from a seeded random state.
pub fn energy_drift(name: &str, seed: u64) -> f64 {
    let cfg = SimConfig {
        dt: 1e-4,
        integrator: Integrator::Rk4,
        ..SimConfig::default()
    };
    let model = robot(name).model.without_damping();
    let mut rng = rng(seed);
    let mut state = random_state(&mut rng, &model, 0.2, 0.5);
    let u = DVector::zeros(model.m());
    let e0 = energy(&model, &state).total();
    for _ in 0..10_000 {
        state = step(&model, &state, &u, &cfg).unwrap();
    }
    (energy(&model, &state).total() - e0).abs() / e0.abs()
}

/// Relative RMS of `e'' - mu` on the Finger when the linearizing input is
/// recomputed every `dt` and held in between; `e''` comes from second
/// differences of the simulated task position sampled every 1e-4 s over
/// 0.1 s.
pub fn io_linearization_rms(dt: f64) -> f64 {
    let model = robot("finger").model;
    let cfg = SimConfig {
        dt,
        ..SimConfig::default()
    };
    let mut state = RobotState::new(DVector::from_vec(vec![0.4, 0.05, 0.4, 0.05]), DVector::zeros(4));
    let target = Reference::setpoint(DVector::from_vec(vec![0.1, -0.2]));
    let mu = DVector::from_vec(vec![0.5, -0.3]);
    let h = 1e-4;
    let per_sample = (h / dt).round() as usize;
    let samples = (0.1 / h).round() as usize;
    let mut ys = Vec::with_capacity(samples + 1);
    for k in 0..=samples * per_sample {
        if k % per_sample == 0 {
            ys.push(forward_kinematics(&model, &state.q));
        }
        // Applied unclamped: the property concerns the input law itself.
        let u = io_linearizing_u(&model, &state, &target, &mu).unwrap();
        state = step(&model, &state, &u, &cfg).unwrap();
    }
    // Constant reference, so e'' = y''.
    let sq: f64 = (1..samples)
        .map(|k| ((&ys[k + 1] - &ys[k] * 2.0 + &ys[k - 1]) / (h * h) - &mu).norm_squared())
        .sum();
    (sq / (samples - 1) as f64).sqrt() / mu.norm()
}
