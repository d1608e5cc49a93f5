//! Benchmark robots (Finger, Helix, SpiRob) and their controller gains.
//!
//! Physical parameters are desk-scale stand-ins stored in the embedded TOML
//! files under `robots/`; only the lengths, DOF counts and actuator counts
//! are fixed by the benchmark definition.

mod spec;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub use spec::{
    ActuationSpec, BoundsSpec, ExperimentSpec, GainSpec, JointSpec, JointType, LinkSpec, RobotSpecFile,
    TendonSpec, SCHEMA_VERSION,
};

use crate::controllers::ControllerKind;
use crate::error::{Error, Result};
use crate::multibody::{bias_terms, RobotModel, RobotState};

/// Default null-space damping when a gain table omits it.
pub const DEFAULT_D_NULL: f64 = 1.0;

/// Controller parameters. `K_d` is always derived as `2 sqrt(K_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub kp: f64,
    pub eps: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub rho: f64,
    pub d_null: f64,
}

impl GainSet {
    pub fn kd(&self) -> f64 {
        2.0 * self.kp.sqrt()
    }

    /// Checks sign constraints; `rho` must be positive only where `delta` exists.
    pub fn validate(&self, kind: ControllerKind) -> Result<()> {
        let bad = |name: &'static str, value: f64| Err(Error::NonPositiveWeight { name, index: 0, value });
        if !(self.kp > 0.0 && self.kp.is_finite()) {
            return bad("kp", self.kp);
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps", self.eps);
        }
        if kind.uses_clf() && !(self.rho > 0.0) {
            return bad("rho", self.rho);
        }
        for (name, v) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("w4", self.w4), ("d_null", self.d_null)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("gain {name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Sets one gain by name; used for command-line overrides.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "kp" => &mut self.kp,
            "eps" => &mut self.eps,
            "w1" => &mut self.w1,
            "w2" => &mut self.w2,
            "w3" => &mut self.w3,
            "w4" => &mut self.w4,
            "rho" => &mut self.rho,
            "d_null" => &mut self.d_null,
            _ => {
                return Err(Error::Unknown {
                    kind: "gain",
                    name: key.to_string(),
                })
            }
        };
        *slot = value;
        Ok(())
    }

    pub fn entries(&self) -> [(&'static str, f64); 8] {
        [
            ("kp", self.kp),
            ("eps", self.eps),
            ("w1", self.w1),
            ("w2", self.w2),
            ("w3", self.w3),
            ("w4", self.w4),
            ("rho", self.rho),
            ("d_null", self.d_null),
        ]
    }
}

impl From<&GainSpec> for GainSet {
    fn from(g: &GainSpec) -> Self {
        GainSet {
            kp: g.kp,
            eps: g.eps,
            w1: g.w1,
            w2: g.w2,
            w3: g.w3,
            w4: g.w4,
            rho: g.rho,
            d_null: g.d_null.unwrap_or(DEFAULT_D_NULL),
        }
    }
}

/// A loaded robot: model, per-controller gains and experiment geometry.
#[derive(Debug, Clone)]
pub struct Robot {
    pub model: RobotModel,
    pub gains: BTreeMap<ControllerKind, GainSet>,
    /// Ellipse center offset as a fraction of the total length.
    pub reach: f64,
    pub spec: RobotSpecFile,
}

impl Robot {
    pub fn from_spec(spec: RobotSpecFile) -> Result<Self> {
        let model = spec.to_model()?;
        let mut gains = BTreeMap::new();
        for (name, g) in &spec.gains {
            let kind: ControllerKind = name.parse()?;
            let set = GainSet::from(g);
            set.validate(kind)?;
            gains.insert(kind, set);
        }
        if let Some(missing) = ControllerKind::ALL.iter().find(|k| !gains.contains_key(k)) {
            return Err(Error::Validation(format!(
                "gains table has no entry for controller '{}'",
                missing.name()
            )));
        }
        if !(spec.experiment.reach > 0.0 && spec.experiment.reach <= 1.0) {
            return Err(Error::Validation(format!(
                "experiment.reach = {} must lie in (0, 1]",
                spec.experiment.reach
            )));
        }
        Ok(Robot {
            model,
            gains,
            reach: spec.experiment.reach,
            spec,
        })
    }

    pub fn name(&self) -> &str {
        &self.model.name
    }

    pub fn gains(&self, kind: ControllerKind) -> &GainSet {
        &self.gains[&kind]
    }
}

const FINGER: &str = include_str!("../../robots/finger.toml");
const HELIX: &str = include_str!("../../robots/helix.toml");
const SPIROB: &str = include_str!("../../robots/spirob.toml");

/// Embedded spec files by robot name.
pub fn builtin_registry() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([("finger", FINGER), ("helix", HELIX), ("spirob", SPIROB)])
}

/// Parses a built-in robot by name.
pub fn builtin(name: &str) -> Result<Robot> {
    let text = builtin_registry().get(name).copied().ok_or_else(|| Error::Unknown {
        kind: "robot",
        name: name.to_string(),
    })?;
    parse_robot(text, &format!("<builtin {name}>"))
}

pub fn parse_robot(text: &str, origin: &str) -> Result<Robot> {
    Robot::from_spec(RobotSpecFile::parse(text, origin)?)
}

pub fn load_robot(path: impl AsRef<Path>) -> Result<Robot> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_robot(&text, &path.display().to_string())
}

/// Built-in name or path to a spec file.
pub fn resolve_robot(name_or_path: &str) -> Result<Robot> {
    if builtin_registry().contains_key(name_or_path) {
        builtin(name_or_path)
    } else if name_or_path.ends_with(".toml") || Path::new(name_or_path).exists() {
        load_robot(name_or_path)
    } else {
        Err(Error::Unknown {
            kind: "robot",
            name: name_or_path.to_string(),
        })
    }
}

/// Orthonormal rows spanning the left null space of `B` (the unactuated
/// directions).
pub fn unactuated_basis(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let proj = DMatrix::identity(n, n) - b * crate::linalg::pinv(b, crate::linalg::PINV_TOL);
    let eig = SymmetricEigen::new(proj);
    let mut idx: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    idx.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let mut w = DMatrix::zeros(idx.len(), n);
    for (r, &i) in idx.iter().enumerate() {
        w.row_mut(r).copy_from(&eig.eigenvectors.column(i).transpose());
    }
    w
}

/// Smallest eigenvalue of `W (K + dg/dq) W^T` at `q`, where `W` spans the
/// unactuated directions. Positive means joint stiffness dominates the
/// gravity gradient there.
pub fn stiffness_margin(model: &RobotModel, q: &DVector<f64>) -> f64 {
    let n = model.n();
    let h = 1e-6;
    let mut dg = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += h;
        qm[k] -= h;
        let gp = bias_terms(model, &RobotState::new(qp, DVector::zeros(n))).g_vec;
        let gm = bias_terms(model, &RobotState::new(qm, DVector::zeros(n))).g_vec;
        dg.set_column(k, &((gp - gm) / (2.0 * h)));
    }
    let stiff = DMatrix::from_diagonal(&model.stiffness) + (&dg + dg.transpose()) * 0.5;
    let w = unactuated_basis(&model.b);
    if w.nrows() == 0 {
        return f64::INFINITY;
    }
    let reduced = &w * stiff * w.transpose();
    SymmetricEigen::new(reduced).eigenvalues.min()
}
