//! Fixed-step simulation with zero-order-hold control.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controllers::{ControlStepLog, Controller, Reference};
use crate::error::{Error, Result};
use crate::kinematics::forward_kinematics;
use crate::multibody::{forward_dynamics, RobotModel, RobotState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    SemiImplicitEuler,
    Rk4,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::SemiImplicitEuler => "semi-implicit-euler",
            Integrator::Rk4 => "rk4",
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Integrator::Rk4),
            "semi-implicit-euler" => Ok(Integrator::SemiImplicitEuler),
            _ => Err(Error::Unknown {
                kind: "integrator",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    /// Physics steps per control update.
    pub control_decimation: usize,
    pub integrator: Integrator,
    pub t_end: f64,
    /// Rest at `q = 0` when `None`.
    pub initial_state: Option<RobotState>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            control_decimation: 1,
            integrator: Integrator::Rk4,
            t_end: 10.0,
            initial_state: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt = {} must be > 0", self.dt)));
        }
        if self.control_decimation == 0 {
            return Err(Error::Validation("control_decimation must be >= 1".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Validation(format!("t_end = {} must be > 0", self.t_end)));
        }
        Ok(())
    }

    /// Number of physics steps, rounded to the nearest whole step.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Control period in seconds.
    pub fn control_dt(&self) -> f64 {
        self.dt * self.control_decimation as f64
    }
}

/// Anything that maps a state and reference to a logged control step.
pub trait ControlLaw {
    fn control(&mut self, model: &RobotModel, state: &RobotState, reference: &Reference) -> Result<ControlStepLog>;
}

impl ControlLaw for Controller {
    fn control(&mut self, model: &RobotModel, state: &RobotState, reference: &Reference) -> Result<ControlStepLog> {
        self.step(model, state, reference)
    }
}

/// One control-rate sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: RobotState,
    pub y: DVector<f64>,
    pub reference: Reference,
    pub control: ControlStepLog,
}

impl Sample {
    pub fn error(&self) -> DVector<f64> {
        &self.y - &self.reference.y
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Set when the run stopped early.
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

fn derivative(model: &RobotModel, q: &DVector<f64>, dq: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    forward_dynamics(model, &RobotState::new(q.clone(), dq.clone()), u)
}

/// Advances the state by one physics step with constant input.
pub fn step(model: &RobotModel, state: &RobotState, u: &DVector<f64>, cfg: &SimConfig) -> Result<RobotState> {
    let dt = cfg.dt;
    let (q, dq) = (&state.q, &state.dq);
    let (q1, dq1) = match cfg.integrator {
        Integrator::SemiImplicitEuler => {
            let ddq = derivative(model, q, dq, u)?;
            let dq1 = dq + ddq * dt;
            let q1 = q + &dq1 * dt;
            (q1, dq1)
        }
        Integrator::Rk4 => {
            let a1 = derivative(model, q, dq, u)?;
            let v1 = dq.clone();
            let v2 = dq + &a1 * (0.5 * dt);
            let a2 = derivative(model, &(q + &v1 * (0.5 * dt)), &v2, u)?;
            let v3 = dq + &a2 * (0.5 * dt);
            let a3 = derivative(model, &(q + &v2 * (0.5 * dt)), &v3, u)?;
            let v4 = dq + &a3 * dt;
            let a4 = derivative(model, &(q + &v3 * dt), &v4, u)?;
            let q1 = q + (v1 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
            let dq1 = dq + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
            (q1, dq1)
        }
    };
    let next = RobotState {
        q: q1,
        dq: dq1,
        t: state.t + dt,
    };
    if !next.is_finite() {
        return Err(Error::NonFinite {
            t: next.t,
            what: "joint state".into(),
        });
    }
    Ok(next)
}

/// Simulates from the configured initial state to `t_end`, logging at the
/// control rate (including both end points). Errors during the run end it
/// early and are recorded in [`Trajectory::failure`].
pub fn run<C, R>(model: &RobotModel, controller: &mut C, reference: R, cfg: &SimConfig) -> Result<Trajectory>
where
    C: ControlLaw + ?Sized,
    R: Fn(f64) -> Reference,
{
    cfg.validate()?;
    let n = model.n();
    let mut state = cfg.initial_state.clone().unwrap_or_else(|| RobotState::rest(n));
    if state.q.len() != n || state.dq.len() != n {
        return Err(Error::Dimension(format!("initial state does not have n = {n} coordinates")));
    }
    let total = cfg.steps();
    let mut traj = Trajectory {
        samples: Vec::with_capacity(total / cfg.control_decimation + 1),
        failure: None,
    };
    let mut u = DVector::zeros(model.m());
    for k in 0..=total {
        state.t = k as f64 * cfg.dt;
        if k % cfg.control_decimation == 0 || k == total {
            let r = reference(state.t);
            let log = match controller.control(model, &state, &r) {
                Ok(log) => log,
                Err(e) => {
                    traj.failure = Some(format!("controller failed at t = {:.3} s: {e}", state.t));
                    break;
                }
            };
            u.copy_from(&log.u);
            traj.samples.push(Sample {
                y: forward_kinematics(model, &state.q),
                state: state.clone(),
                reference: r,
                control: log,
            });
        }
        if k == total {
            break;
        }
        match step(model, &state, &u, cfg) {
            Ok(next) => state = next,
            Err(e) => {
                traj.failure = Some(format!("integration failed: {e}"));
                break;
            }
        }
    }
    Ok(traj)
}
