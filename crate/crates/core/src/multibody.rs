//! Serial-chain rigid-body dynamics with compliant joints.
//!
//! Equation of motion: `M(q) q'' + C(q, q') q' + D q' + K q + g(q) = B u`.
//!
//! Every joint is expanded into single-axis revolute DOFs; a ball joint is
//! three of them in sequence (intrinsic X, then Y, then Z) sharing one
//! origin. All spatial quantities are expressed in the world frame with
//! Plücker coordinates taken at the world origin, which keeps the
//! composite-rigid-body and Newton-Euler recursions free of frame changes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix3, Matrix6, Rotation3, Unit, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition-number limit for the inertia matrix in [`forward_dynamics`].
pub const MAX_INERTIA_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum JointKind {
    /// One rotational DOF about `axis` (link frame, normalized on load).
    Revolute { axis: [f64; 3] },
    /// Three rotational DOFs, intrinsic XYZ angles.
    Ball,
}

impl JointKind {
    pub fn dof(&self) -> usize {
        match self {
            JointKind::Revolute { .. } => 1,
            JointKind::Ball => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, link frame.
    pub inertia: Matrix3<f64>,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub kind: JointKind,
    /// Joint origin in the parent link frame (base frame for the first joint).
    pub origin: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Dof {
    axis: Vector3<f64>,
    offset: Vector3<f64>,
    /// Link carried by this DOF's frame (set on the last DOF of each joint).
    link: Option<usize>,
}

/// Immutable kinematic, dynamic and actuation description of a chain robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub stiffness: DVector<f64>,
    pub damping: DVector<f64>,
    pub b: DMatrix<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub gravity: Vector3<f64>,
    pub task_dim: usize,
    /// End-effector point in the last link frame.
    pub ee_offset: Vector3<f64>,
    /// Reflected actuator and cable inertia added to the diagonal of `M`.
    pub armature: DVector<f64>,
    dofs: Vec<Dof>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
    pub t: f64,
}

impl RobotState {
    pub fn rest(n: usize) -> Self {
        RobotState {
            q: DVector::zeros(n),
            dq: DVector::zeros(n),
            t: 0.0,
        }
    }

    pub fn new(q: DVector<f64>, dq: DVector<f64>) -> Self {
        RobotState { q, dq, t: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.q.iter().chain(self.dq.iter()).all(|v| v.is_finite())
    }
}

/// The terms of the equation of motion at one state.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub m: DMatrix<f64>,
    /// `C(q, q') q'`.
    pub c_vec: DVector<f64>,
    /// `D q'`.
    pub d_vec: DVector<f64>,
    /// `K q`.
    pub k_vec: DVector<f64>,
    pub g_vec: DVector<f64>,
}

impl DynamicsTerms {
    /// `h = C q' + D q' + K q + g`.
    pub fn h(&self) -> DVector<f64> {
        &self.c_vec + &self.d_vec + &self.k_vec + &self.g_vec
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub gravity: f64,
    pub elastic: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.gravity + self.elastic
    }
}

impl RobotModel {
    /// Builds and validates a model. Joint `i` carries link `i`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        links: Vec<Link>,
        joints: Vec<Joint>,
        stiffness: DVector<f64>,
        damping: DVector<f64>,
        b: DMatrix<f64>,
        u_min: DVector<f64>,
        u_max: DVector<f64>,
        gravity: Vector3<f64>,
        task_dim: usize,
        ee_offset: Vector3<f64>,
    ) -> Result<Self> {
        if links.is_empty() || links.len() != joints.len() {
            return Err(Error::Validation(format!(
                "{} links but {} joints",
                links.len(),
                joints.len()
            )));
        }
        let mut dofs = Vec::new();
        for (i, joint) in joints.iter().enumerate() {
            match &joint.kind {
                JointKind::Revolute { axis } => {
                    let a = Vector3::from(*axis);
                    if !(a.norm() > 0.0) {
                        return Err(Error::Validation(format!("joint {i}: zero axis")));
                    }
                    dofs.push(Dof {
                        axis: a.normalize(),
                        offset: joint.origin,
                        link: Some(i),
                    });
                }
                JointKind::Ball => {
                    for (k, axis) in [Vector3::x(), Vector3::y(), Vector3::z()].into_iter().enumerate() {
                        dofs.push(Dof {
                            axis,
                            offset: if k == 0 { joint.origin } else { Vector3::zeros() },
                            link: (k == 2).then_some(i),
                        });
                    }
                }
            }
        }
        let n = dofs.len();
        let m = b.ncols();
        let model = RobotModel {
            name: name.into(),
            links,
            joints,
            stiffness,
            damping,
            b,
            u_min,
            u_max,
            gravity,
            task_dim,
            ee_offset,
            armature: DVector::zeros(n),
            dofs,
        };

        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Validation(msg)) };
        check(model.stiffness.len() == n, format!("stiffness has {} entries, expected n = {n}", model.stiffness.len()))?;
        check(model.damping.len() == n, format!("damping has {} entries, expected n = {n}", model.damping.len()))?;
        check(model.b.nrows() == n, format!("B has {} rows, expected n = {n}", model.b.nrows()))?;
        check(m >= 1 && m <= n, format!("m = {m} must satisfy 1 <= m <= n = {n}"))?;
        check(model.u_min.len() == m && model.u_max.len() == m, "input bound length must equal m".into())?;
        check(
            model.u_min.iter().zip(model.u_max.iter()).all(|(lo, hi)| lo < hi),
            "u_min < u_max must hold elementwise".into(),
        )?;
        check(model.stiffness.iter().all(|&k| k >= 0.0), "stiffness entries must be >= 0".into())?;
        check(model.damping.iter().all(|&d| d >= 0.0), "damping entries must be >= 0".into())?;
        check(model.links.iter().all(|l| l.mass > 0.0), "link masses must be > 0".into())?;
        check(model.links.iter().all(|l| l.length >= 0.0), "link lengths must be >= 0".into())?;
        check(matches!(model.task_dim, 2 | 3), format!("task_dim = {} must be 2 or 3", model.task_dim))?;
        let rank = crate::linalg::rank(&model.b, crate::linalg::PINV_TOL);
        if rank < m {
            return Err(Error::RankDeficientB { rank, cols: m });
        }
        Ok(model)
    }

    /// Sets the per-DOF armature (kg m^2).
    pub fn with_armature(mut self, armature: DVector<f64>) -> Result<Self> {
        if armature.len() != self.n() {
            return Err(Error::Validation(format!(
                "armature has {} entries, expected n = {}",
                armature.len(),
                self.n()
            )));
        }
        if !armature.iter().all(|&a| a >= 0.0 && a.is_finite()) {
            return Err(Error::Validation("armature entries must be >= 0".into()));
        }
        self.armature = armature;
        Ok(self)
    }

    /// Number of generalized coordinates.
    pub fn n(&self) -> usize {
        self.dofs.len()
    }

    /// Number of inputs.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Total length (sum of link lengths).
    pub fn total_length(&self) -> f64 {
        self.links.iter().map(|l| l.length).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// World-frame coordinate indices making up the task vector:
    /// `(x, z)` for planar tasks, `(x, y, z)` otherwise.
    pub fn task_axes(&self) -> &'static [usize] {
        if self.task_dim == 2 {
            &[0, 2]
        } else {
            &[0, 1, 2]
        }
    }

    /// Index of the first DOF of each joint.
    pub fn joint_dof_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.joints.len());
        let mut k = 0;
        for j in &self.joints {
            out.push(k);
            k += j.kind.dof();
        }
        out
    }

    /// Clamps an input vector into `[u_min, u_max]`.
    pub fn clamp_input(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.u_min.iter().zip(self.u_max.iter()))
                .map(|(&v, (&lo, &hi))| v.clamp(lo, hi)),
        )
    }

    /// Same model with a different gravity vector.
    pub fn with_gravity(&self, gravity: Vector3<f64>) -> Self {
        RobotModel {
            gravity,
            ..self.clone()
        }
    }

    /// Same model with zero joint damping.
    pub fn without_damping(&self) -> Self {
        RobotModel {
            damping: DVector::zeros(self.n()),
            ..self.clone()
        }
    }
}

/// World-frame placement of every DOF frame and the end effector.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    /// Orientation of each DOF frame (after its rotation).
    pub rot: Vec<Matrix3<f64>>,
    /// Origin of each DOF frame.
    pub origin: Vec<Vector3<f64>>,
    /// Rotation axis of each DOF, world frame.
    pub axis: Vec<Vector3<f64>>,
    pub ee: Vector3<f64>,
}

impl ChainFrames {
    pub fn new(model: &RobotModel, q: &DVector<f64>) -> Self {
        let n = model.n();
        let mut rot = Vec::with_capacity(n);
        let mut origin = Vec::with_capacity(n);
        let mut axis = Vec::with_capacity(n);
        let mut r_prev = Matrix3::identity();
        let mut o_prev = Vector3::zeros();
        for (k, dof) in model.dofs.iter().enumerate() {
            let o = o_prev + r_prev * dof.offset;
            let z = r_prev * dof.axis;
            let local = Rotation3::from_axis_angle(&Unit::new_unchecked(dof.axis), q[k]);
            let r = r_prev * local.matrix();
            rot.push(r);
            origin.push(o);
            axis.push(z);
            r_prev = r;
            o_prev = o;
        }
        let ee = o_prev + r_prev * model.ee_offset;
        ChainFrames {
            rot,
            origin,
            axis,
            ee,
        }
    }

    /// Plücker motion subspace of DOF `k` at the world origin.
    fn motion(&self, k: usize) -> Vector6<f64> {
        let z = self.axis[k];
        let v = self.origin[k].cross(&z);
        Vector6::new(z.x, z.y, z.z, v.x, v.y, v.z)
    }

    fn body_inertia(&self, model: &RobotModel, k: usize, link: usize) -> Matrix6<f64> {
        let l = &model.links[link];
        let r = self.rot[k];
        let c = self.origin[k] + r * l.com;
        let ic = r * l.inertia * r.transpose();
        spatial_inertia(l.mass, &c, &ic)
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Spatial inertia at the world origin of a body with mass `m`, world COM `c`
/// and world rotational inertia `ic` about the COM.
fn spatial_inertia(m: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Matrix6<f64> {
    let cx = skew(c);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(ic + m * cx * cx.transpose()));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(m * cx));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(m * cx.transpose()));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(Matrix3::identity() * m));
    out
}

fn cross_motion(a: &Vector6<f64>, b: &Vector6<f64>) -> Vector6<f64> {
    let (aw, av) = (a.fixed_rows::<3>(0), a.fixed_rows::<3>(3));
    let (bw, bv) = (b.fixed_rows::<3>(0), b.fixed_rows::<3>(3));
    let w = aw.cross(&bw);
    let v = aw.cross(&bv) + av.cross(&bw);
    Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z)
}

fn cross_force(a: &Vector6<f64>, f: &Vector6<f64>) -> Vector6<f64> {
    let (aw, av) = (a.fixed_rows::<3>(0), a.fixed_rows::<3>(3));
    let (fn_, ff) = (f.fixed_rows::<3>(0), f.fixed_rows::<3>(3));
    let n = aw.cross(&fn_) + av.cross(&ff);
    let l = aw.cross(&ff);
    Vector6::new(n.x, n.y, n.z, l.x, l.y, l.z)
}

/// Composite-rigid-body algorithm.
fn crba(model: &RobotModel, frames: &ChainFrames) -> DMatrix<f64> {
    let n = model.n();
    let s: Vec<Vector6<f64>> = (0..n).map(|k| frames.motion(k)).collect();
    let mut m = DMatrix::zeros(n, n);
    let mut composite = Matrix6::zeros();
    for k in (0..n).rev() {
        if let Some(link) = model.dofs[k].link {
            composite += frames.body_inertia(model, k, link);
        }
        let f = composite * s[k];
        m[(k, k)] = s[k].dot(&f) + model.armature[k];
        for j in 0..k {
            let v = s[j].dot(&f);
            m[(k, j)] = v;
            m[(j, k)] = v;
        }
    }
    m
}

/// Recursive Newton-Euler inverse dynamics. With `ddq = None` the joint
/// accelerations are zero; `with_gravity` toggles the gravity field.
fn rnea(
    model: &RobotModel,
    frames: &ChainFrames,
    dq: &DVector<f64>,
    ddq: Option<&DVector<f64>>,
    with_gravity: bool,
) -> DVector<f64> {
    let n = model.n();
    let g = if with_gravity { -model.gravity } else { Vector3::zeros() };
    let mut v = Vector6::zeros();
    let mut a = Vector6::new(0.0, 0.0, 0.0, g.x, g.y, g.z);
    let mut s = Vec::with_capacity(n);
    let mut forces = vec![Vector6::zeros(); n];
    for k in 0..n {
        let sk = frames.motion(k);
        v += sk * dq[k];
        a += cross_motion(&v, &sk) * dq[k];
        if let Some(ddq) = ddq {
            a += sk * ddq[k];
        }
        if let Some(link) = model.dofs[k].link {
            let inertia = frames.body_inertia(model, k, link);
            forces[k] = inertia * a + cross_force(&v, &(inertia * v));
        }
        s.push(sk);
    }
    let mut tau = DVector::zeros(n);
    let mut acc = Vector6::zeros();
    for k in (0..n).rev() {
        acc += forces[k];
        tau[k] = s[k].dot(&acc);
    }
    tau
}

/// Joint-space inertia matrix.
pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
    crba(model, &ChainFrames::new(model, q))
}

/// All terms of the equation of motion at `state`.
pub fn bias_terms(model: &RobotModel, state: &RobotState) -> DynamicsTerms {
    let frames = ChainFrames::new(model, &state.q);
    bias_terms_with_frames(model, state, &frames)
}

pub(crate) fn bias_terms_with_frames(
    model: &RobotModel,
    state: &RobotState,
    frames: &ChainFrames,
) -> DynamicsTerms {
    let n = model.n();
    let m = crba(model, frames);
    let c_vec = rnea(model, frames, &state.dq, None, false);
    let g_vec = rnea(model, frames, &DVector::zeros(n), None, true);
    DynamicsTerms {
        m,
        c_vec,
        d_vec: model.damping.component_mul(&state.dq),
        k_vec: model.stiffness.component_mul(&state.q),
        g_vec,
    }
}

/// `h(q, q') = C q' + D q' + K q + g`.
pub fn h_vector(model: &RobotModel, state: &RobotState) -> DVector<f64> {
    let frames = ChainFrames::new(model, &state.q);
    h_with_frames(model, state, &frames)
}

fn h_with_frames(model: &RobotModel, state: &RobotState, frames: &ChainFrames) -> DVector<f64> {
    rnea(model, frames, &state.dq, None, true)
        + model.damping.component_mul(&state.dq)
        + model.stiffness.component_mul(&state.q)
}

/// Inverse dynamics: `M q'' + h`.
pub fn inverse_dynamics(model: &RobotModel, state: &RobotState, ddq: &DVector<f64>) -> DVector<f64> {
    let frames = ChainFrames::new(model, &state.q);
    rnea(model, &frames, &state.dq, Some(ddq), true)
        + model.armature.component_mul(ddq)
        + model.damping.component_mul(&state.dq)
        + model.stiffness.component_mul(&state.q)
}

/// Solves `M q'' = B u - h` through a Cholesky factorization of `M`.
pub fn forward_dynamics(model: &RobotModel, state: &RobotState, u: &DVector<f64>) -> Result<DVector<f64>> {
    let frames = ChainFrames::new(model, &state.q);
    let m = crba(model, &frames);
    let rhs = &model.b * u - h_with_frames(model, state, &frames);
    solve_spd(m, rhs)
}

/// Cholesky factor of `M`, rejecting ill-conditioned matrices. The condition
/// number is estimated from the factor diagonal.
pub fn factor_inertia(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let chol = m.cholesky().ok_or(Error::IllConditioned(f64::INFINITY))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let cond = (hi / lo).powi(2);
    if !(cond <= MAX_INERTIA_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    Ok(chol)
}

pub(crate) fn solve_spd(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    Ok(factor_inertia(m)?.solve(&rhs))
}

/// Kinetic, gravitational and elastic energy.
pub fn energy(model: &RobotModel, state: &RobotState) -> Energy {
    let frames = ChainFrames::new(model, &state.q);
    let m = crba(model, &frames);
    let kinetic = 0.5 * state.dq.dot(&(&m * &state.dq));
    let mut gravity = 0.0;
    for (k, dof) in model.dofs.iter().enumerate() {
        if let Some(link) = dof.link {
            let l = &model.links[link];
            let c = frames.origin[k] + frames.rot[k] * l.com;
            gravity -= l.mass * model.gravity.dot(&c);
        }
    }
    let elastic = 0.5 * state.q.dot(&model.stiffness.component_mul(&state.q));
    Energy {
        kinetic,
        gravity,
        elastic,
    }
}
