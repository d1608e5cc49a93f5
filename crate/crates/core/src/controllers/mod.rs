//! The five task-space control laws and the per-step plumbing they share.
//!
//! Every step function is a pure map from (model, state, reference, gains)
//! to an input; [`Controller`] wraps one of them with the zero-order-hold
//! state needed when a QP turns out infeasible.

mod impedance;
mod qp_based;
mod split;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

pub use impedance::{impedance_step, uic_step};
pub use qp_based::{clf_qp_step, ic_qp_step, soft_id_clf_qp_step};
pub use split::CollocatedSplit;

use crate::clf::{build_clf_identity, clf_value, vdot_coeffs, ClfData, TaskError};
use crate::error::{Error, Result};
use crate::kinematics::TaskState;
use crate::linalg::{pinv, QpSolution, QpStatus, PINV_TOL};
use crate::multibody::{bias_terms_with_frames, factor_inertia, ChainFrames, DynamicsTerms, RobotModel, RobotState};
use crate::robots::GainSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    ClfQp,
    SoftIdClfQp,
    Ic,
    Uic,
    IcQp,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::ClfQp,
        ControllerKind::SoftIdClfQp,
        ControllerKind::Ic,
        ControllerKind::Uic,
        ControllerKind::IcQp,
    ];

    /// Command-line / file name.
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::ClfQp => "clf-qp",
            ControllerKind::SoftIdClfQp => "soft-id-clf-qp",
            ControllerKind::Ic => "ic",
            ControllerKind::Uic => "uic",
            ControllerKind::IcQp => "ic-qp",
        }
    }

    /// Display label for tables.
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::ClfQp => "CLF-QP",
            ControllerKind::SoftIdClfQp => "Soft ID-CLF-QP",
            ControllerKind::Ic => "IC",
            ControllerKind::Uic => "UIC",
            ControllerKind::IcQp => "IC-QP",
        }
    }

    pub fn uses_clf(self) -> bool {
        matches!(self, ControllerKind::ClfQp | ControllerKind::SoftIdClfQp)
    }

    pub fn uses_qp(self) -> bool {
        !matches!(self, ControllerKind::Ic | ControllerKind::Uic)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "controller",
                name: s.to_string(),
            })
    }
}

/// Desired task-space trajectory sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub y: DVector<f64>,
    pub dy: DVector<f64>,
    pub ddy: DVector<f64>,
}

impl Reference {
    pub fn setpoint(y: DVector<f64>) -> Self {
        let n = y.len();
        Reference {
            y,
            dy: DVector::zeros(n),
            ddy: DVector::zeros(n),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().chain(self.dy.iter()).chain(self.ddy.iter()).all(|v| v.is_finite())
    }
}

/// What one control update decided.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlStepLog {
    /// Applied input, always inside the bounds.
    pub u: DVector<f64>,
    /// Task error acceleration the controller aimed for.
    pub mu: DVector<f64>,
    pub delta: f64,
    pub v: f64,
    /// `a0 + a1 mu` at this step.
    pub vdot: f64,
    /// `None` for the closed-form impedance laws.
    pub qp_status: Option<QpStatus>,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Seconds spent in the QP solver.
    pub solve_time: f64,
    pub saturated: Vec<bool>,
    /// True when the previous input was reused because the QP failed.
    pub held: bool,
}

/// Per-step quantities shared by all controllers.
pub struct StepContext {
    pub terms: DynamicsTerms,
    pub h: DVector<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub task: TaskState,
    pub error: TaskError,
}

impl StepContext {
    pub fn new(model: &RobotModel, state: &RobotState, reference: &Reference) -> Result<Self> {
        if reference.y.len() != model.task_dim {
            return Err(Error::Dimension(format!(
                "reference has {} components, task dimension is {}",
                reference.y.len(),
                model.task_dim
            )));
        }
        let frames = ChainFrames::new(model, &state.q);
        let terms = bias_terms_with_frames(model, state, &frames);
        let h = terms.h();
        let chol = factor_inertia(terms.m.clone())?;
        let task = TaskState::with_frames(model, state, &frames);
        let error = TaskError::new(&task.y - &reference.y, &task.dy - &reference.dy);
        Ok(StepContext {
            terms,
            h,
            chol,
            task,
            error,
        })
    }

    /// `M^-1 X` through the cached factorization.
    pub fn minv(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(x)
    }
}

/// `(L_f^2 y, L_g L_f y)` of the task output.
pub fn lie_terms(model: &RobotModel, state: &RobotState) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = model.task_dim;
    let ctx = StepContext::new(model, state, &Reference::setpoint(DVector::zeros(n)))?;
    Ok(lie_terms_ctx(model, state, &ctx))
}

pub(crate) fn lie_terms_ctx(model: &RobotModel, state: &RobotState, ctx: &StepContext) -> (DVector<f64>, DMatrix<f64>) {
    let j = &ctx.task.j;
    let lf2y = j * ctx.chol.solve(&(-&ctx.h)) + &ctx.task.dj * &state.dq;
    let lglfy = j * ctx.minv(&model.b);
    (lf2y, lglfy)
}

/// Input-output linearizing input `(L_g L_f y)^+ (-L_f^2 y + mu + ddy_ref)`.
pub fn io_linearizing_u(
    model: &RobotModel,
    state: &RobotState,
    reference: &Reference,
    mu: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ctx = StepContext::new(model, state, reference)?;
    let (lf2y, a) = lie_terms_ctx(model, state, &ctx);
    warn_if_rank_deficient(&a);
    Ok(pinv(&a, PINV_TOL) * (mu + &reference.ddy - lf2y))
}

fn warn_if_rank_deficient(a: &DMatrix<f64>) {
    let sv = a.clone().singular_values();
    if sv.min() < PINV_TOL * sv.max() {
        log::info!("L_g L_f y is rank deficient (sigma_min / sigma_max = {:.3e})", sv.min() / sv.max());
    }
}

/// PD reference `-K_d de - K_p e`.
pub fn mu_ref(gains: &GainSet, error: &TaskError) -> DVector<f64> {
    -&error.de * gains.kd() - &error.e * gains.kp
}

/// Marks inputs sitting on a bound.
pub(crate) fn saturation_mask(model: &RobotModel, u: &DVector<f64>) -> Vec<bool> {
    u.iter()
        .zip(model.u_min.iter().zip(model.u_max.iter()))
        .map(|(&v, (&lo, &hi))| {
            let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            v <= lo + tol || v >= hi - tol
        })
        .collect()
}

/// Assembles the log for a QP-based step, holding `prev_u` when the solver
/// did not return an optimal point.
pub(crate) fn qp_log(
    model: &RobotModel,
    clf: &ClfData,
    error: &TaskError,
    sol: &QpSolution,
    u: DVector<f64>,
    mu: DVector<f64>,
    delta: f64,
    prev_u: &DVector<f64>,
) -> ControlStepLog {
    let held = !sol.is_optimal();
    let u = if held {
        log::debug!("QP status {:?}; holding previous input", sol.status);
        model.clamp_input(prev_u)
    } else {
        // Solver bounds hold to round-off; clamping makes them exact.
        model.clamp_input(&u)
    };
    let v = clf_value(clf, error);
    let (a0, a1) = vdot_coeffs(clf, error);
    ControlStepLog {
        saturated: saturation_mask(model, &u),
        u,
        vdot: a0 + a1.dot(&mu),
        mu,
        delta,
        v,
        qp_status: Some(sol.status),
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
        solve_time: sol.solve_time,
        held,
    }
}

/// A control law with its gains, CLF and hold state.
#[derive(Debug, Clone)]
pub struct Controller {
    pub kind: ControllerKind,
    pub gains: GainSet,
    pub clf: ClfData,
    pub split: CollocatedSplit,
    prev_u: DVector<f64>,
}

impl Controller {
    pub fn new(kind: ControllerKind, model: &RobotModel, gains: GainSet) -> Result<Self> {
        gains.validate(kind)?;
        let clf = build_clf_identity(gains.eps, model.task_dim)?;
        let split = CollocatedSplit::new(&model.b)?;
        Ok(Controller {
            kind,
            gains,
            clf,
            split,
            prev_u: DVector::zeros(model.m()),
        })
    }

    pub fn reset(&mut self) {
        self.prev_u.fill(0.0);
    }

    pub fn step(&mut self, model: &RobotModel, state: &RobotState, reference: &Reference) -> Result<ControlStepLog> {
        let log = match self.kind {
            ControllerKind::ClfQp => clf_qp_step(model, state, reference, &self.gains, &self.clf, &self.prev_u)?,
            ControllerKind::SoftIdClfQp => {
                soft_id_clf_qp_step(model, state, reference, &self.gains, &self.clf, &self.split, &self.prev_u)?
            }
            ControllerKind::IcQp => ic_qp_step(model, state, reference, &self.gains, &self.clf, &self.split, &self.prev_u)?,
            ControllerKind::Ic => impedance_step(model, state, reference, &self.gains, &self.clf)?,
            ControllerKind::Uic => uic_step(model, state, reference, &self.gains, &self.clf)?,
        };
        let mut log = log;
        if !log.u.iter().all(|v| v.is_finite()) {
            log::debug!("non-finite input at t = {:.4} s; holding previous input", state.t);
            log.u = model.clamp_input(&self.prev_u);
            log.saturated = saturation_mask(model, &log.u);
            log.held = true;
        }
        self.prev_u.copy_from(&log.u);
        Ok(log)
    }
}
