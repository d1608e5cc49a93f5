//! On-disk robot description (TOML).
//!
//! ```toml
//! schema_version = 1
//! name = "finger"
//! task_dim = 2
//!
//! [[links]]
//! mass = 0.05
//! length = 0.06
//! com = [0.0, 0.0, -0.03]
//! inertia = [1.5e-5, 1.5e-5, 1e-7]
//!
//! [[joints]]
//! type = "revolute"
//! axis = [0.0, -1.0, 0.0]
//! origin = [0.0, 0.0, 0.0]
//!
//! [actuation]
//! kind = "matrix"
//! b = [[0.01, 0.0], ...]
//!
//! [bounds]
//! u_min = [-80.0, -80.0]
//! u_max = [80.0, 80.0]
//!
//! [gains.clf-qp]
//! kp = 500.0
//! eps = 0.05
//! w1 = 1.0
//! rho = 1000.0
//! ```
//!
//! Tendon routing may replace the explicit matrix:
//!
//! ```toml
//! [actuation]
//! kind = "tendons"
//!
//! [[actuation.tendons]]
//! angle_deg = 90.0      # position around the backbone, measured from +x
//! joints = [0, 11]      # first and last joint crossed (inclusive)
//! moment_arm = 0.02     # at joint 0
//! taper = 1.0           # moment arm at joint j is moment_arm * taper^j
//! twist = 0.0           # axial moment per unit bending moment arm
//! ```

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multibody::{Joint, JointKind, Link, RobotModel};

pub const SCHEMA_VERSION: u32 = 1;

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

fn is_default_gravity(g: &[f64; 3]) -> bool {
    *g == default_gravity()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpecFile {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub task_dim: usize,
    #[serde(default = "default_gravity", skip_serializing_if = "is_default_gravity")]
    pub gravity: [f64; 3],
    /// End-effector point in the last link frame; defaults to the link tip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ee_offset: Option<[f64; 3]>,
    pub stiffness: Vec<f64>,
    pub damping: Vec<f64>,
    /// Per-DOF armature (kg m^2); zero when omitted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub armature: Vec<f64>,
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    pub actuation: ActuationSpec,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub gains: BTreeMap<String, GainSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub mass: f64,
    pub length: f64,
    /// Center of mass in the link frame.
    pub com: [f64; 3],
    /// Principal moments about the center of mass, link axes.
    pub inertia: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointType {
    Revolute,
    Ball,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    #[serde(rename = "type")]
    pub kind: JointType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    /// Offset from the parent joint, parent link frame.
    #[serde(default)]
    pub origin: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ActuationSpec {
    /// Row-major `n x m` matrix.
    Matrix { b: Vec<Vec<f64>> },
    Tendons { tendons: Vec<TendonSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TendonSpec {
    pub angle_deg: f64,
    pub joints: [usize; 2],
    pub moment_arm: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub taper: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub twist: f64,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Ellipse center distance from the base as a fraction of the length.
    pub reach: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec { reach: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    pub kp: f64,
    pub eps: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub w1: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub w2: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub w3: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub w4: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_null: Option<f64>,
}

impl RobotSpecFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let spec: RobotSpecFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        if spec.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                path: origin.to_string(),
                message: format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    spec.schema_version
                ),
            });
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Builds the validated dynamic model.
    pub fn to_model(&self) -> Result<RobotModel> {
        let links = self
            .links
            .iter()
            .map(|l| Link {
                mass: l.mass,
                com: Vector3::from(l.com),
                inertia: Matrix3::from_diagonal(&Vector3::from(l.inertia)),
                length: l.length,
            })
            .collect::<Vec<_>>();
        let joints = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let kind = match (j.kind, j.axis) {
                    (JointType::Revolute, Some(axis)) => JointKind::Revolute { axis },
                    (JointType::Revolute, None) => {
                        return Err(Error::Validation(format!("joints[{i}]: revolute joint needs an axis")))
                    }
                    (JointType::Ball, None) => JointKind::Ball,
                    (JointType::Ball, Some(_)) => {
                        return Err(Error::Validation(format!("joints[{i}]: ball joint takes no axis")))
                    }
                };
                Ok(Joint {
                    kind,
                    origin: Vector3::from(j.origin),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let b = self.actuation_matrix()?;
        let ee_offset = match (self.ee_offset, self.links.last()) {
            (Some(p), _) => Vector3::from(p),
            (None, Some(l)) => Vector3::new(0.0, 0.0, -l.length),
            (None, None) => Vector3::zeros(),
        };
        let model = RobotModel::new(
            self.name.clone(),
            links,
            joints,
            DVector::from_vec(self.stiffness.clone()),
            DVector::from_vec(self.damping.clone()),
            b,
            DVector::from_vec(self.bounds.u_min.clone()),
            DVector::from_vec(self.bounds.u_max.clone()),
            Vector3::from(self.gravity),
            self.task_dim,
            ee_offset,
        )?;
        if self.armature.is_empty() {
            Ok(model)
        } else {
            model.with_armature(DVector::from_vec(self.armature.clone()))
        }
    }

    fn dof_count(&self) -> usize {
        self.joints
            .iter()
            .map(|j| match j.kind {
                JointType::Revolute => 1,
                JointType::Ball => 3,
            })
            .sum()
    }

    /// Actuation matrix, expanding tendon routing if needed.
    pub fn actuation_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.dof_count();
        match &self.actuation {
            ActuationSpec::Matrix { b } => {
                if b.len() != n {
                    return Err(Error::Validation(format!("actuation.b has {} rows, expected n = {n}", b.len())));
                }
                let m = b.first().map_or(0, |r| r.len());
                if b.iter().any(|r| r.len() != m) {
                    return Err(Error::Validation("actuation.b rows differ in length".into()));
                }
                Ok(DMatrix::from_fn(n, m, |i, j| b[i][j]))
            }
            ActuationSpec::Tendons { tendons } => self.tendon_matrix(tendons, n),
        }
    }

    // A tendon at angle phi with tension u pulls toward the base at radius
    // r, giving the moment u r (sin phi, -cos phi, twist) in the joint frame.
    fn tendon_matrix(&self, tendons: &[TendonSpec], n: usize) -> Result<DMatrix<f64>> {
        let mut b = DMatrix::zeros(n, tendons.len());
        let mut offsets = Vec::with_capacity(self.joints.len());
        let mut k = 0;
        for j in &self.joints {
            offsets.push(k);
            k += if j.kind == JointType::Ball { 3 } else { 1 };
        }
        for (c, t) in tendons.iter().enumerate() {
            let [first, last] = t.joints;
            if first > last || last >= self.joints.len() {
                return Err(Error::Validation(format!(
                    "actuation.tendons[{c}]: joint span [{first}, {last}] outside 0..{}",
                    self.joints.len()
                )));
            }
            let phi = t.angle_deg.to_radians();
            for ji in first..=last {
                let r = t.moment_arm * t.taper.powi(ji as i32);
                let moment = Vector3::new(phi.sin(), -phi.cos(), t.twist) * r;
                let joint = &self.joints[ji];
                match joint.kind {
                    JointType::Revolute => {
                        let axis = Vector3::from(joint.axis.unwrap_or([0.0; 3]));
                        let norm = axis.norm();
                        if norm > 0.0 {
                            b[(offsets[ji], c)] = axis.dot(&moment) / norm;
                        }
                    }
                    JointType::Ball => {
                        for a in 0..3 {
                            b[(offsets[ji] + a, c)] = moment[a];
                        }
                    }
                }
            }
        }
        Ok(b)
    }
}
