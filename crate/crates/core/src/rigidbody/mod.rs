//! Kinematics and dynamics of an unbranched revolute chain.
//!
//! A chain is a list of links. Link `i` hangs off link `i - 1` through a
//! fixed URDF-style origin transform followed by a revolute joint about a
//! unit axis expressed in the joint frame. Inertial parameters are given in
//! the link frame (after the joint rotation).

mod dynamics;
mod friction;
mod integrate;
mod kinematics;

pub use dynamics::{
    coriolis_matrix, gravity_torque, joint_space_dynamics, mass_matrix, mass_matrix_dot, rnea, task_space_dynamics,
    Damping, JointDynamics, TaskDynamics, HARD_SIGMA_FLOOR, LAMBDA_MAX, SIGMA_RAMP_HI, SIGMA_RAMP_LO,
};
pub use friction::{friction_torque, static_friction, FrictionModel, STICTION_BAND};
pub use integrate::{step_forward_dynamics, step_rk4, step_with, StepOptions};
pub use kinematics::{forward_kinematics, jacobian, jacobian_dot, link_frames, LinkFrame};

use crate::error::{Error, Result};
use crate::{DVector, Matrix3, Vector3};
use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};
use std::path::Path;

const FRANKA_LIKE: &str = include_str!("../../data/franka_like.toml");

/// Fixed transform: translation `xyz` then roll/pitch/yaw (`R = Rz Ry Rx`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Origin {
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Origin {
    pub fn rotation(&self) -> Matrix3 {
        Rotation3::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]).into_inner()
    }

    pub fn translation(&self) -> Vector3 {
        Vector3::from(self.xyz)
    }
}

/// Joint limits; omitted fields are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    #[serde(default = "neg_inf", skip_serializing_if = "is_inf")]
    pub lower: f64,
    #[serde(default = "pos_inf", skip_serializing_if = "is_inf")]
    pub upper: f64,
    #[serde(default = "pos_inf", skip_serializing_if = "is_inf")]
    pub velocity: f64,
    #[serde(default = "pos_inf", skip_serializing_if = "is_inf")]
    pub effort: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

fn is_inf(v: &f64) -> bool {
    v.is_infinite()
}

impl Default for JointLimits {
    fn default() -> Self {
        JointLimits { lower: f64::NEG_INFINITY, upper: f64::INFINITY, velocity: f64::INFINITY, effort: f64::INFINITY }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    #[serde(default)]
    pub name: String,
    /// Index of the parent link; `None` means the base. Defaults to the
    /// previous link in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    pub transform: Origin,
    pub axis: [f64; 3],
    pub mass: f64,
    pub com: [f64; 3],
    /// `[ixx, ixy, ixz, iyy, iyz, izz]` about the center of mass.
    pub inertia: [f64; 6],
    /// Reflected rotor inertia added to the joint's diagonal inertia.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub armature: f64,
    #[serde(default)]
    pub limits: JointLimits,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Link {
    pub fn inertia_matrix(&self) -> Matrix3 {
        let [xx, xy, xz, yy, yz, zz] = self.inertia;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }
}

/// Precomputed per-link constants.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinkCache {
    pub origin_rot: Matrix3,
    pub origin_pos: Vector3,
    pub axis: Unit<Vector3>,
    pub com: Vector3,
    pub inertia: Matrix3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChainFile {
    #[serde(default)]
    name: String,
    gravity: [f64; 3],
    links: Vec<Link>,
    #[serde(default)]
    tool: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    home: Option<Vec<f64>>,
}

/// Immutable, validated serial-chain model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainFile", into = "ChainFile")]
pub struct ChainModel {
    pub name: String,
    pub gravity: Vector3,
    pub links: Vec<Link>,
    pub tool: Origin,
    pub home: Option<Vec<f64>>,
    #[serde(skip)]
    pub(crate) cache: Vec<LinkCache>,
    #[serde(skip)]
    pub(crate) tool_rot: Matrix3,
}

impl TryFrom<ChainFile> for ChainModel {
    type Error = Error;
    fn try_from(f: ChainFile) -> Result<Self> {
        ChainModel::new(f.name, Vector3::from(f.gravity), f.links, f.tool, f.home)
    }
}

impl From<ChainModel> for ChainFile {
    fn from(m: ChainModel) -> Self {
        ChainFile { name: m.name, gravity: m.gravity.into(), links: m.links, tool: m.tool, home: m.home }
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ChainModel {
    pub fn new(name: String, gravity: Vector3, links: Vec<Link>, tool: Origin, home: Option<Vec<f64>>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if links.is_empty() {
            return bad("chain has no links".into());
        }
        if !finite(gravity.as_slice()) || !finite(&tool.xyz) || !finite(&tool.rpy) {
            return bad("non-finite gravity or tool transform".into());
        }
        let mut cache = Vec::with_capacity(links.len());
        for (i, l) in links.iter().enumerate() {
            let tag = if l.name.is_empty() { format!("#{i}") } else { l.name.clone() };
            let expected = i.checked_sub(1);
            if l.parent.is_some() && l.parent != expected {
                return bad(format!("link {tag}: only unbranched serial chains are supported"));
            }
            if !(l.mass > 0.0) || !l.mass.is_finite() {
                return bad(format!("link {tag}: mass must be positive"));
            }
            if !(l.armature >= 0.0) || !l.armature.is_finite() {
                return bad(format!("link {tag}: armature must be finite and non-negative"));
            }
            if !finite(&l.com) || !finite(&l.inertia) || !finite(&l.transform.xyz) || !finite(&l.transform.rpy) {
                return bad(format!("link {tag}: non-finite parameter"));
            }
            let axis = Vector3::from(l.axis);
            if !(axis.norm() > 1e-9) || !axis.norm().is_finite() {
                return bad(format!("link {tag}: joint axis must be non-zero"));
            }
            let inertia = l.inertia_matrix();
            let eig = inertia.symmetric_eigenvalues();
            if eig.min() <= 0.0 {
                return bad(format!("link {tag}: inertia tensor is not positive definite"));
            }
            let lim = &l.limits;
            if lim.lower > lim.upper || !(lim.velocity > 0.0) || !(lim.effort > 0.0) {
                return bad(format!("link {tag}: inconsistent joint limits"));
            }
            cache.push(LinkCache {
                origin_rot: l.transform.rotation(),
                origin_pos: l.transform.translation(),
                axis: Unit::new_normalize(axis),
                com: Vector3::from(l.com),
                inertia,
            });
        }
        if let Some(h) = &home {
            if h.len() != links.len() || !finite(h) {
                return bad(format!("home configuration must have {} finite entries", links.len()));
            }
        }
        let tool_rot = tool.rotation();
        Ok(ChainModel { name, gravity, links, tool, home, cache, tool_rot })
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Load from a `.toml` or `.json` file (by extension; TOML otherwise).
    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&s),
            _ => Self::from_toml_str(&s),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// The shipped 7-DOF Franka-like chain.
    pub fn franka_like() -> Self {
        Self::from_toml_str(FRANKA_LIKE).expect("bundled chain file is valid")
    }

    /// Single z-axis revolute link of length `len` with a point-like mass at its tip.
    pub fn single_link(len: f64, mass: f64) -> Self {
        let link = Link {
            name: "link1".into(),
            parent: None,
            transform: Origin::default(),
            axis: [0.0, 0.0, 1.0],
            mass,
            com: [len, 0.0, 0.0],
            inertia: [1e-6, 0.0, 0.0, 1e-6, 0.0, 1e-6],
            armature: 0.0,
            limits: JointLimits::default(),
        };
        let tool = Origin { xyz: [len, 0.0, 0.0], rpy: [0.0; 3] };
        Self::new("single".into(), Vector3::zeros(), vec![link], tool, None).unwrap()
    }

    /// Planar chain of `n` z-axis joints with unit-length links along x.
    /// Gravity acts along -y so the chain behaves like an n-link pendulum.
    pub fn planar(n: usize, len: f64, mass: f64) -> Self {
        let links = (0..n)
            .map(|i| Link {
                name: format!("link{}", i + 1),
                parent: None,
                transform: Origin { xyz: [if i == 0 { 0.0 } else { len }, 0.0, 0.0], rpy: [0.0; 3] },
                axis: [0.0, 0.0, 1.0],
                mass,
                com: [0.5 * len, 0.0, 0.0],
                inertia: [1e-3, 0.0, 0.0, mass * len * len / 12.0, 0.0, mass * len * len / 12.0],
                armature: 0.0,
                limits: JointLimits::default(),
            })
            .collect();
        let tool = Origin { xyz: [len, 0.0, 0.0], rpy: [0.0; 3] };
        Self::new(format!("planar{n}"), Vector3::new(0.0, -9.81, 0.0), links, tool, None).unwrap()
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn with_gravity(mut self, g: Vector3) -> Self {
        self.gravity = g;
        self
    }

    pub fn home_configuration(&self) -> DVector {
        match &self.home {
            Some(h) => DVector::from_column_slice(h),
            None => DVector::zeros(self.dof()),
        }
    }

    pub fn lower_limits(&self) -> DVector {
        DVector::from_iterator(self.dof(), self.links.iter().map(|l| l.limits.lower))
    }

    pub fn upper_limits(&self) -> DVector {
        DVector::from_iterator(self.dof(), self.links.iter().map(|l| l.limits.upper))
    }

    pub fn effort_limits(&self) -> DVector {
        DVector::from_iterator(self.dof(), self.links.iter().map(|l| l.limits.effort))
    }

    /// True if every joint is inside its position limits.
    pub fn within_limits(&self, q: &DVector) -> bool {
        q.iter().zip(&self.links).all(|(v, l)| *v >= l.limits.lower && *v <= l.limits.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector,
    pub dq: DVector,
    pub ddq: DVector,
}

impl JointState {
    pub fn at_rest(q: DVector) -> Self {
        let n = q.len();
        JointState { q, dq: DVector::zeros(n), ddq: DVector::zeros(n) }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.dq.iter()).chain(self.ddq.iter()).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_chain_loads() {
        let m = ChainModel::franka_like();
        assert_eq!(m.dof(), 7);
        assert!(m.within_limits(&m.home_configuration()));
        let s = m.to_toml_string().unwrap();
        let back = ChainModel::from_toml_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_links() {
        let mut m = ChainModel::franka_like();
        m.links[2].mass = 0.0;
        let r = ChainModel::new(m.name.clone(), m.gravity, m.links.clone(), m.tool, None);
        assert!(matches!(r, Err(Error::InvalidModel(_))));

        let mut m = ChainModel::franka_like();
        m.links[3].inertia = [1.0, 0.0, 0.0, -1.0, 0.0, 1.0];
        let r = ChainModel::new(m.name.clone(), m.gravity, m.links.clone(), m.tool, None);
        assert!(matches!(r, Err(Error::InvalidModel(_))));

        let mut m = ChainModel::franka_like();
        m.links[4].parent = Some(1);
        let r = ChainModel::new(m.name.clone(), m.gravity, m.links.clone(), m.tool, None);
        assert!(matches!(r, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn json_round_trip() {
        let m = ChainModel::planar(3, 1.0, 1.0);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(ChainModel::from_json_str(&s).unwrap(), m);
    }
}
