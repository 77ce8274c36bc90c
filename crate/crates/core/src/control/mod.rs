//! Sliding surfaces, the adaptive gain law and the task-space control laws.
//!
//! All controllers produce a task-space wrench `u`; the joint torque is
//! `τ = Jᵀ u` (see [`TaskDynamics::joint_torque`]).

mod laws;

pub use laws::{
    ntsm_control, ntstsm_control, pd_control, stsm_control, ControlOutput, Controller, ControllerSpec, PdGains, NU_MAX,
};

use crate::error::{Error, Result};
use crate::rigidbody::TaskDynamics;
use crate::rotation::{h_matrix, quat_error, HMatrix, Pose};
use crate::trajgen::TrajectorySample;
use crate::Vector6;
use serde::{Deserialize, Serialize};

/// `|v|^p · sign(v)`, the odd extension of `v^p`.
pub fn signed_pow(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.abs().powf(p).copysign(v)
    }
}

pub fn signed_pow6(v: &Vector6, p: f64) -> Vector6 {
    v.map(|x| signed_pow(x, p))
}

/// Sliding-surface and gain-region parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlidingParams {
    pub beta: f64,
    /// Numerator of `α = ι₁/ι₂` (odd).
    pub iota1: u32,
    /// Denominator of `α = ι₁/ι₂` (odd).
    pub iota2: u32,
    /// Sharpness of the `tanh` replacing `sign`.
    pub k_s: f64,
    pub theta: f64,
    pub gamma: f64,
    pub omega1: f64,
    pub omega2: f64,
}

impl Default for SlidingParams {
    fn default() -> Self {
        SlidingParams { beta: 1.0, iota1: 9, iota2: 7, k_s: 30.0, theta: 0.9, gamma: 6.0, omega1: 1.5, omega2: 0.14 }
    }
}

impl SlidingParams {
    pub fn alpha(&self) -> f64 {
        self.iota1 as f64 / self.iota2 as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iota1.is_multiple_of(2) || self.iota2.is_multiple_of(2) {
            return bad("α must be a ratio of odd integers");
        }
        let a = self.alpha();
        if !(a > 1.0 && a < 2.0) {
            return bad("α must lie in (1, 2)");
        }
        if !(self.beta > 0.0 && self.k_s > 0.0 && self.gamma > 0.0 && self.omega1 > 0.0 && self.omega2 > 0.0) {
            return bad("β, k_s, γ, Ω₁, Ω₂ must be positive");
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("θ must lie in (0, 1)");
        }
        Ok(())
    }

    /// `Γ_i = αβ|ė_i|^{α−1}`.
    pub fn gamma_of(&self, de: &Vector6) -> Vector6 {
        let a = self.alpha();
        de.map(|x| a * self.beta * x.abs().powf(a - 1.0))
    }
}

/// Adaptive-law parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveParams {
    pub omega_a: f64,
    /// Boundary-layer width.
    pub mu_a: f64,
    pub eta_a: f64,
    pub kappa1_min: f64,
    pub kappa1_max: f64,
    /// Floor on the adaptation parameter.
    pub l_min: f64,
    /// Initial value of the adaptation parameter.
    pub l_init: f64,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        AdaptiveParams {
            omega_a: 1000.0,
            mu_a: 0.001,
            eta_a: 0.1,
            kappa1_min: 5.0,
            kappa1_max: 200.0,
            l_min: 1e-3,
            l_init: 1.0,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.omega_a, self.mu_a, self.eta_a, self.kappa1_min, self.kappa1_max, self.l_min, self.l_init];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("adaptive-law parameters must be positive".into()));
        }
        if self.kappa1_min >= self.kappa1_max {
            return Err(Error::Config("κ₁min must be below κ₁max".into()));
        }
        Ok(())
    }
}

/// Task-space tracking error `e = (p̃, ε̃)` and its rate `ė = H (ṗ̃, ω̃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingError {
    pub e: Vector6,
    pub de: Vector6,
    pub eta_t: f64,
}

/// Tracking error of an estimated pose/twist against a trajectory sample.
pub fn tracking_error(pose: &Pose, twist: &Vector6, traj: &TrajectorySample) -> Result<(TrackingError, HMatrix)> {
    let q = quat_error(&pose.xi, &traj.xi_d);
    let h = h_matrix(&q)?;
    let p = pose.p - traj.p_d;
    let mut rel = *twist;
    for i in 0..3 {
        rel[i] -= traj.v_d[i];
        rel[i + 3] -= traj.w_d[i];
    }
    let e = Vector6::new(p.x, p.y, p.z, q.eps_t.x, q.eps_t.y, q.eps_t.z);
    Ok((TrackingError { e, de: h.apply(&rel), eta_t: q.eta_t }, h))
}

/// Terminal surface `s = e + β ė^α`.
pub fn sliding_surface(err: &TrackingError, p: &SlidingParams) -> Vector6 {
    err.e + signed_pow6(&err.de, p.alpha()) * p.beta
}

/// Linear surface `s = e + β ė`.
pub fn linear_surface(err: &TrackingError, p: &SlidingParams) -> Vector6 {
    err.e + err.de * p.beta
}

/// `κ₁ = Ω₁ √(2γL / ((1−θ)Ω₂))`, `κ₂ = (θ+1)/(1−θ) · L`.
pub fn kappa_from_l(l: f64, p: &SlidingParams) -> (f64, f64) {
    let k1 = p.omega1 * (2.0 * p.gamma * l / ((1.0 - p.theta) * p.omega2)).sqrt();
    let k2 = (p.theta + 1.0) / (1.0 - p.theta) * l;
    (k1, k2)
}

/// Inverse of the `κ₁` closed form.
pub fn l_from_kappa1(k1: f64, p: &SlidingParams) -> f64 {
    (k1 / p.omega1).powi(2) * (1.0 - p.theta) * p.omega2 / (2.0 * p.gamma)
}

/// Constant ratio `κ₂ / κ₁² = Ω₂(θ+1) / (2γΩ₁²)`.
pub fn kappa_ratio(p: &SlidingParams) -> f64 {
    p.omega2 * (p.theta + 1.0) / (2.0 * p.gamma * p.omega1 * p.omega1)
}

/// Per-channel sliding-controller state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlidingState {
    pub l: Vector6,
    pub nu: Vector6,
    pub kappa1: Vector6,
    pub kappa2: Vector6,
    pub s: Vector6,
}

impl SlidingState {
    pub fn new(p: &SlidingParams, a: &AdaptiveParams) -> Self {
        let (k1, k2) = kappa_from_l(a.l_init, p);
        SlidingState {
            l: Vector6::repeat(a.l_init),
            nu: Vector6::zeros(),
            kappa1: Vector6::repeat(k1),
            kappa2: Vector6::repeat(k2),
            s: Vector6::zeros(),
        }
    }
}

/// Rate of the adaptation parameter for one channel.
pub fn l_rate(kappa1: f64, s: f64, a: &AdaptiveParams) -> f64 {
    if kappa1 >= a.kappa1_max {
        -a.eta_a
    } else if kappa1 <= a.kappa1_min {
        a.eta_a
    } else {
        let d = s.abs() - a.mu_a;
        let sg = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        a.omega_a * s.abs() * sg
    }
}

/// One explicit-Euler step of the adaptive law; gains are recomputed from
/// the closed forms and `L` is floored at `l_min`.
pub fn adapt_gains(st: &SlidingState, s: &Vector6, p: &SlidingParams, a: &AdaptiveParams, dt: f64) -> SlidingState {
    let mut out = *st;
    for i in 0..6 {
        let l = (st.l[i] + dt * l_rate(st.kappa1[i], s[i], a)).max(a.l_min);
        let (k1, k2) = kappa_from_l(l, p);
        out.l[i] = l;
        out.kappa1[i] = k1;
        out.kappa2[i] = k2;
    }
    out.s = *s;
    out
}

/// `tanh(k_s v)` element-wise.
pub fn smooth_sign(v: &Vector6, k_s: f64) -> Vector6 {
    v.map(|x| (k_s * x).tanh())
}

/// Required task acceleration for a given error-space command `v`:
/// `ẍ_d + H⁻¹ v`.
pub(crate) fn task_accel(traj: &TrajectorySample, h: &HMatrix, v: &Vector6) -> Vector6 {
    let xdd = Vector6::new(traj.a_d.x, traj.a_d.y, traj.a_d.z, traj.dw_d.x, traj.dw_d.y, traj.dw_d.z);
    xdd + h.apply_inv(v)
}

/// `u = M̄ a + C̄ + Ḡ`.
pub(crate) fn wrench(dyn_: &TaskDynamics, accel: &Vector6) -> Vector6 {
    dyn_.mbar * accel + dyn_.cbar + dyn_.gbar
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::{axis_to_quat, quat_mul, UnitQuat};
    use crate::Vector3;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample_at(p: Vector3, xi: UnitQuat) -> TrajectorySample {
        TrajectorySample {
            t: 0.0,
            p_d: p,
            xi_d: xi,
            v_d: Vector3::zeros(),
            w_d: Vector3::zeros(),
            a_d: Vector3::zeros(),
            dw_d: Vector3::zeros(),
        }
    }

    #[test]
    fn perfect_tracking_and_pure_offset() {
        let xi = UnitQuat::new(0.3, Vector3::new(0.1, 0.9, -0.2));
        let p = Vector3::new(0.4, 0.0, 0.3);
        let tr = sample_at(p, xi);
        let (err, _) = tracking_error(&Pose::new(p, xi), &Vector6::zeros(), &tr).unwrap();
        assert_eq!(err.e.norm(), 0.0);
        assert_eq!(err.de.norm(), 0.0);
        let (err, _) =
            tracking_error(&Pose::new(p + Vector3::new(0.01, 0.0, 0.0), xi), &Vector6::zeros(), &tr).unwrap();
        assert_relative_eq!(err.e, Vector6::new(0.01, 0.0, 0.0, 0.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn error_rate_matches_flow() {
        // small orientation error, desired pose fixed, body moving with twist (v, ω)
        let xi_d = UnitQuat::new(0.8, Vector3::new(0.3, -0.4, 0.2));
        let p_d = Vector3::new(0.5, 0.1, 0.2);
        let tr = sample_at(p_d, xi_d);
        let v = Vector3::new(0.1, -0.2, 0.05);
        let w = Vector3::new(0.3, 0.2, -0.4);
        let q0 = axis_to_quat(&Vector3::new(1e-4, -2e-4, 1e-4));
        let at = |t: f64| {
            let xi = quat_mul(&axis_to_quat(&(w * t)), &quat_mul(&q0, &xi_d));
            let p = p_d + Vector3::new(0.001, 0.0, 0.0) + v * t;
            tracking_error(&Pose::new(p, xi), &Vector6::new(v.x, v.y, v.z, w.x, w.y, w.z), &tr).unwrap().0
        };
        let h = 1e-6;
        let fd = (at(h).e - at(-h).e) / (2.0 * h);
        let de = at(0.0).de;
        assert!((fd - de).norm() / de.norm() < 1e-3);
    }

    #[test]
    fn surface_values() {
        let p = SlidingParams::default();
        let zero = TrackingError { e: Vector6::zeros(), de: Vector6::zeros(), eta_t: 1.0 };
        assert_eq!(sliding_surface(&zero, &p), Vector6::zeros());
        let e_only = TrackingError { e: Vector6::repeat(0.001), de: Vector6::zeros(), eta_t: 1.0 };
        assert_eq!(sliding_surface(&e_only, &p), Vector6::repeat(0.001));
        let de_only = TrackingError { e: Vector6::zeros(), de: Vector6::repeat(-0.1), eta_t: 1.0 };
        let s = sliding_surface(&de_only, &p);
        let oracle = -(p.alpha() * 0.1f64.ln()).exp();
        assert_relative_eq!(s[0], oracle, epsilon = 1e-15);
        assert_relative_eq!(s[0], -0.0518, epsilon = 1e-4);
        let lin = TrackingError { e: Vector6::repeat(0.001), de: Vector6::repeat(0.001), eta_t: 1.0 };
        assert_relative_eq!(linear_surface(&lin, &p)[0], 0.002, epsilon = 1e-15);
    }

    #[test]
    fn kappa_closed_forms() {
        let p = SlidingParams::default();
        let (k1, k2) = kappa_from_l(1.0, &p);
        let direct = 1.5 * (2.0f64 * 6.0 * 1.0 / (0.1 * 0.14)).sqrt();
        assert!((k1 - direct).abs() < 1e-9);
        assert!((k1 - 43.92).abs() < 5e-3);
        assert!((k2 - 19.0).abs() < 1e-9);
        assert!((k2 - kappa_ratio(&p) * k1 * k1).abs() < 1e-9);
        assert_relative_eq!(l_from_kappa1(k1, &p), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn adaptive_law_branches() {
        let a = AdaptiveParams::default();
        // inside the boundary layer the gain decays
        assert!(l_rate(40.0, 0.0005, &a) < 0.0);
        assert!(l_rate(40.0, 0.01, &a) > 0.0);
        assert_eq!(l_rate(200.0, 5.0, &a), -0.1);
        assert_eq!(l_rate(250.0, 5.0, &a), -0.1);
        assert_eq!(l_rate(5.0, 0.0, &a), 0.1);
        assert_eq!(l_rate(40.0, 0.001, &a), 0.0);
    }

    #[test]
    fn gains_stay_in_band_and_keep_ratio() {
        let p = SlidingParams::default();
        let a = AdaptiveParams::default();
        let mut st = SlidingState::new(&p, &a);
        let dt = 1e-3;
        let ratio = kappa_ratio(&p);
        for k in 0..200_000 {
            // large error for a while, then none
            let s = if k < 100_000 { Vector6::repeat(0.05) } else { Vector6::zeros() };
            st = adapt_gains(&st, &s, &p, &a, dt);
            for i in 0..6 {
                assert!(st.kappa1[i] < a.kappa1_max + 1.0 && st.kappa1[i] > a.kappa1_min - 1.0);
                assert!((st.kappa2[i] - ratio * st.kappa1[i].powi(2)).abs() < 1e-9);
                assert!(st.l[i] >= a.l_min);
            }
        }
    }

    proptest! {
        #[test]
        fn signed_power_round_trip(v in -10.0..10.0f64) {
            let a = 9.0 / 7.0;
            let back = signed_pow(signed_pow(v, a), 1.0 / a);
            prop_assert!((back - v).abs() < 1e-9);
            prop_assert_eq!(signed_pow(-v, a), -signed_pow(v, a));
        }
    }
}
