//! Unit-quaternion algebra and the orientation-error map used by the
//! task-space controllers.
//!
//! Quaternions are stored scalar-first as `(eta, eps)` and serialized in the
//! order `(eta, eps_x, eps_y, eps_z)` everywhere.

use crate::error::{Error, Result};
use crate::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Lower bound on `|eta~|` below which `H` is treated as not invertible.
pub const ETA_FLOOR: f64 = 0.1;

/// Angles below this use the Taylor branch in the axis-angle conversions.
const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric cross-product matrix `[v]`, so that `[v] w = v × w`.
pub fn skew(v: &Vector3) -> Matrix3 {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    pub eta: f64,
    pub eps: Vector3,
}

impl From<[f64; 4]> for UnitQuat {
    fn from(a: [f64; 4]) -> Self {
        UnitQuat::new(a[0], Vector3::new(a[1], a[2], a[3]))
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        q.to_array()
    }
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuat {
    pub fn identity() -> Self {
        UnitQuat { eta: 1.0, eps: Vector3::zeros() }
    }

    /// Normalizes and canonicalizes to `eta >= 0`.
    pub fn new(eta: f64, eps: Vector3) -> Self {
        Self::new_preserve_sign(eta, eps).canonical()
    }

    /// Normalizes but keeps the sign of the input.
    pub fn new_preserve_sign(eta: f64, eps: Vector3) -> Self {
        let n = (eta * eta + eps.norm_squared()).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Self::identity();
        }
        UnitQuat { eta: eta / n, eps: eps / n }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        axis_to_quat(&(axis / n * angle))
    }

    pub fn canonical(self) -> Self {
        if self.eta < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn norm(&self) -> f64 {
        (self.eta * self.eta + self.eps.norm_squared()).sqrt()
    }

    pub fn dot(&self, other: &UnitQuat) -> f64 {
        self.eta * other.eta + self.eps.dot(&other.eps)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.eta, self.eps.x, self.eps.y, self.eps.z]
    }

    pub fn mul(&self, rhs: &UnitQuat) -> UnitQuat {
        quat_mul(self, rhs)
    }

    pub fn conj(&self) -> UnitQuat {
        quat_conj(self)
    }

    /// Rotate a vector: `R(q) v`.
    pub fn rotate(&self, v: &Vector3) -> Vector3 {
        let t = 2.0 * self.eps.cross(v);
        v + self.eta * t + self.eps.cross(&t)
    }

    pub fn to_rotation_matrix(&self) -> Matrix3 {
        let (w, x, y, z) = (self.eta, self.eps.x, self.eps.y, self.eps.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Shepperd's method; the result is canonicalized.
    pub fn from_rotation_matrix(r: &Matrix3) -> Self {
        let tr = r.trace();
        let (w, x, y, z);
        if tr > r[(0, 0)] && tr > r[(1, 1)] && tr > r[(2, 2)] {
            let s = (1.0 + tr).sqrt() * 2.0;
            w = 0.25 * s;
            x = (r[(2, 1)] - r[(1, 2)]) / s;
            y = (r[(0, 2)] - r[(2, 0)]) / s;
            z = (r[(1, 0)] - r[(0, 1)]) / s;
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(2, 1)] - r[(1, 2)]) / s;
            x = 0.25 * s;
            y = (r[(0, 1)] + r[(1, 0)]) / s;
            z = (r[(0, 2)] + r[(2, 0)]) / s;
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            w = (r[(0, 2)] - r[(2, 0)]) / s;
            x = (r[(0, 1)] + r[(1, 0)]) / s;
            y = 0.25 * s;
            z = (r[(1, 2)] + r[(2, 1)]) / s;
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            w = (r[(1, 0)] - r[(0, 1)]) / s;
            x = (r[(0, 2)] + r[(2, 0)]) / s;
            y = (r[(1, 2)] + r[(2, 1)]) / s;
            z = 0.25 * s;
        }
        UnitQuat::new(w, Vector3::new(x, y, z))
    }

    /// Shortest rotation vector taking `prev` to `self` in the fixed frame,
    /// i.e. `log(self ⊗ prev*)`.
    pub fn rotation_from(&self, prev: &UnitQuat) -> Vector3 {
        quat_to_axis(&quat_mul(self, &prev.conj()))
    }
}

/// The antipodal quaternion (same rotation).
impl std::ops::Neg for UnitQuat {
    type Output = UnitQuat;

    fn neg(self) -> UnitQuat {
        UnitQuat { eta: -self.eta, eps: -self.eps }
    }
}

/// Hamilton product `a ⊗ b`, renormalized; the sign of the product is kept.
pub fn quat_mul(a: &UnitQuat, b: &UnitQuat) -> UnitQuat {
    let eta = a.eta * b.eta - a.eps.dot(&b.eps);
    let eps = a.eta * b.eps + b.eta * a.eps + a.eps.cross(&b.eps);
    UnitQuat::new_preserve_sign(eta, eps)
}

pub fn quat_conj(a: &UnitQuat) -> UnitQuat {
    UnitQuat { eta: a.eta, eps: -a.eps }
}

/// Scaled angle-axis `Θ = angle · axis` with `|Θ| <= π`.
pub fn quat_to_axis(q: &UnitQuat) -> Vector3 {
    let q = q.canonical();
    let s = q.eps.norm();
    if s < 0.5 * SMALL_ANGLE {
        // angle ≈ 2 s, so Θ ≈ 2 eps / eta
        return 2.0 * q.eps / q.eta;
    }
    let angle = 2.0 * s.atan2(q.eta);
    q.eps * (angle / s)
}

pub fn axis_to_quat(theta: &Vector3) -> UnitQuat {
    let angle = theta.norm();
    if angle < SMALL_ANGLE {
        let eps = theta * (0.5 * (1.0 - angle * angle / 24.0));
        return UnitQuat::new_preserve_sign(1.0 - angle * angle / 8.0, eps);
    }
    let half = 0.5 * angle;
    UnitQuat::new_preserve_sign(half.cos(), theta * (half.sin() / angle))
}

/// Orientation error `(eta~, eps~)` between a measured and a desired
/// orientation, equal to `measured ⊗ desired*` with `eta~ >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuatError {
    pub eta_t: f64,
    pub eps_t: Vector3,
}

impl QuatError {
    pub fn norm(&self) -> f64 {
        (self.eta_t * self.eta_t + self.eps_t.norm_squared()).sqrt()
    }
}

pub fn quat_error(measured: &UnitQuat, desired: &UnitQuat) -> QuatError {
    let (eh, ed) = (measured.eta, desired.eta);
    let (sh, sd) = (&measured.eps, &desired.eps);
    let mut eta_t = eh * ed + sh.dot(sd);
    let mut eps_t = -eh * sd + ed * sh - sh.cross(sd);
    if eta_t < 0.0 {
        eta_t = -eta_t;
        eps_t = -eps_t;
    }
    QuatError { eta_t, eps_t }
}

/// Block map `H = diag(I, ½(η~ I + [ε~]))` from `(ṗ~, ω~)` to error rates,
/// together with its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HMatrix {
    pub rot: Matrix3,
    pub rot_inv: Matrix3,
}

pub fn h_matrix(err: &QuatError) -> Result<HMatrix> {
    h_matrix_with_floor(err, ETA_FLOOR)
}

pub fn h_matrix_with_floor(err: &QuatError, floor: f64) -> Result<HMatrix> {
    let eta = err.eta_t;
    if !(eta.abs() >= floor) {
        return Err(Error::OrientationErrorTooLarge { eta, floor });
    }
    let e = &err.eps_t;
    let n2 = eta * eta + e.norm_squared();
    let rot = 0.5 * (Matrix3::identity() * eta + skew(e));
    // (ηI + [ε])⁻¹ = (ηI − [ε] + εεᵀ/η) / (η² + |ε|²)
    let rot_inv = 2.0 * (Matrix3::identity() * eta - skew(e) + e * e.transpose() / eta) / n2;
    Ok(HMatrix { rot, rot_inv })
}

impl HMatrix {
    pub fn identity_error() -> Self {
        HMatrix { rot: Matrix3::identity() * 0.5, rot_inv: Matrix3::identity() * 2.0 }
    }

    pub fn apply(&self, v: &Vector6) -> Vector6 {
        let r = self.rot * v.fixed_rows::<3>(3);
        Vector6::new(v[0], v[1], v[2], r[0], r[1], r[2])
    }

    pub fn apply_inv(&self, v: &Vector6) -> Vector6 {
        let r = self.rot_inv * v.fixed_rows::<3>(3);
        Vector6::new(v[0], v[1], v[2], r[0], r[1], r[2])
    }

    pub fn to_matrix(&self) -> Matrix6 {
        let mut m = Matrix6::identity();
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rot);
        m
    }

    pub fn inv_matrix(&self) -> Matrix6 {
        let mut m = Matrix6::identity();
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rot_inv);
        m
    }

    pub fn det(&self) -> f64 {
        self.rot.determinant()
    }
}

/// End-effector pose: position plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub p: Vector3,
    pub xi: UnitQuat,
}

impl Pose {
    pub fn new(p: Vector3, xi: UnitQuat) -> Self {
        Pose { p, xi }
    }

    /// Compose `self ∘ other` (other expressed in self's frame).
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose { p: self.p + self.xi.rotate(&other.p), xi: quat_mul(&self.xi, &other.xi) }
    }
}
