//! Third-order sliding-mode (TOSM) task-space observer with an EMA
//! finite-difference fallback and a convergence-gated selector.
//!
//! The observer works in 6-dim task coordinates. Position channels are
//! Cartesian. Orientation channels are carried multiplicatively: the
//! estimate is a unit quaternion `ξ̂` and the innovation is the rotation
//! error `2 vec(ξ_meas ⊗ ξ̂*)`, which is the same error parameterization the
//! controller uses. `ĝ₂` estimates the twist `(ṗ, ω)`.

use crate::error::{Error, Result};
use crate::rigidbody::TaskDynamics;
use crate::rotation::{axis_to_quat, quat_error, quat_mul, Pose, UnitQuat};
use crate::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverParams {
    /// Per-channel disturbance bound `F̄`.
    pub fbar: [f64; 6],
    pub k_o1: f64,
    pub k_o2: f64,
    /// EMA smoothing factor in `(0, 1]`.
    pub alpha_e: f64,
    /// Selector threshold.
    pub eta_q: f64,
    /// Saturation of the disturbance-integral state.
    pub z_sat: f64,
}

impl Default for ObserverParams {
    fn default() -> Self {
        ObserverParams { fbar: [20.0; 6], k_o1: 200.0, k_o2: 400.0, alpha_e: 0.02, eta_q: 0.5, z_sat: 50.0 }
    }
}

impl ObserverParams {
    pub fn alpha_o0(&self) -> Vector6 {
        Vector6::from_iterator(self.fbar.iter().map(|f| 1.1 * f))
    }

    pub fn alpha_o1(&self) -> Vector6 {
        Vector6::from_iterator(self.fbar.iter().map(|f| 1.5 * f.sqrt()))
    }

    pub fn alpha_o2(&self) -> Vector6 {
        Vector6::from_iterator(self.fbar.iter().map(|f| 1.9 * f.cbrt()))
    }

    pub fn validate(&self) -> Result<()> {
        let pos = self.fbar.iter().all(|f| *f > 0.0)
            && self.k_o1 > 0.0
            && self.k_o2 > 0.0
            && self.eta_q > 0.0
            && self.z_sat > 0.0;
        if !pos {
            return Err(Error::Config("observer gains, thresholds and F̄ must be positive".into()));
        }
        if !(self.alpha_e > 0.0 && self.alpha_e <= 1.0) {
            return Err(Error::Config("observer EMA factor must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverState {
    pub p_hat: Vector3,
    pub xi_hat: UnitQuat,
    pub g2_hat: Vector6,
    pub z_hat: Vector6,
    pub ema_vel: Vector6,
    /// Previous measurement, for the EMA difference.
    pub last: Pose,
    /// Last innovation `g₁ − ĝ₁` (position difference, rotation-error vector).
    pub innovation: Vector6,
}

impl ObserverState {
    /// Warm start: `ĝ₁` at the first measurement, `ĝ₂ = ẑ = 0`.
    pub fn new(first: &Pose) -> Self {
        ObserverState {
            p_hat: first.p,
            xi_hat: first.xi,
            g2_hat: Vector6::zeros(),
            z_hat: Vector6::zeros(),
            ema_vel: Vector6::zeros(),
            last: *first,
            innovation: Vector6::zeros(),
        }
    }

    pub fn pose_hat(&self) -> Pose {
        Pose::new(self.p_hat, self.xi_hat)
    }

    pub fn is_finite(&self) -> bool {
        self.p_hat.iter().all(|v| v.is_finite())
            && self.xi_hat.to_array().iter().all(|v| v.is_finite())
            && self.g2_hat.iter().all(|v| v.is_finite())
            && self.z_hat.iter().all(|v| v.is_finite())
            && self.ema_vel.iter().all(|v| v.is_finite())
    }
}

/// `sign` with `sign(0) = 0`.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn spow(x: f64, p: f64) -> f64 {
    x.abs().powf(p) * sgn(x)
}

/// `g₁ − ĝ₁` in task coordinates.
pub fn innovation(meas: &Pose, p_hat: &Vector3, xi_hat: &UnitQuat) -> Vector6 {
    let dp = meas.p - p_hat;
    let e = quat_error(&meas.xi, xi_hat).eps_t * 2.0;
    Vector6::new(dp.x, dp.y, dp.z, e.x, e.y, e.z)
}

/// Finite difference of two poses as a twist-like 6-vector.
pub fn pose_difference(now: &Pose, prev: &Pose, dt: f64) -> Vector6 {
    let dp = (now.p - prev.p) / dt;
    let w = now.xi.rotation_from(&prev.xi) / dt;
    Vector6::new(dp.x, dp.y, dp.z, w.x, w.y, w.z)
}

/// `α_e (x − x_prev)/Δt + (1 − α_e) v_prev`.
pub fn ema_velocity(st: &ObserverState, x_meas: &Pose, alpha_e: f64, dt: f64) -> Vector6 {
    pose_difference(x_meas, &st.last, dt) * alpha_e + st.ema_vel * (1.0 - alpha_e)
}

/// One explicit-Euler step of the observer and the EMA fallback.
///
/// `u` is the task-space command applied over the step and `dyn_` the task
/// dynamics at the current state.
pub fn observer_step(
    st: &ObserverState,
    params: &ObserverParams,
    x_meas: &Pose,
    u: &Vector6,
    dyn_: &TaskDynamics,
    dt: f64,
) -> Result<ObserverState> {
    let accel = dyn_
        .mbar
        .cholesky()
        .ok_or_else(|| Error::ObserverDiverged("task inertia not positive definite".into()))?
        .solve(&(u - dyn_.cbar - dyn_.gbar));
    step_with_accel(st, params, x_meas, &accel, dt)
}

/// Observer step with the model acceleration `M̄⁻¹(u − C̄ − Ḡ)` supplied.
pub fn step_with_accel(
    st: &ObserverState,
    params: &ObserverParams,
    x_meas: &Pose,
    accel: &Vector6,
    dt: f64,
) -> Result<ObserverState> {
    if !(dt > 0.0) {
        return Err(Error::ObserverDiverged(format!("non-positive time step {dt}")));
    }
    let (a0, a1, a2) = (params.alpha_o0(), params.alpha_o1(), params.alpha_o2());
    let e1 = innovation(x_meas, &st.p_hat, &st.xi_hat);
    let mut g1_dot = st.g2_hat;
    for i in 0..6 {
        g1_dot[i] += a2[i] * spow(e1[i], 2.0 / 3.0) + params.k_o2 * e1[i];
    }
    let gap = g1_dot - st.g2_hat;
    let mut g2_dot = accel + st.z_hat;
    let mut z_dot = Vector6::zeros();
    for i in 0..6 {
        g2_dot[i] += a1[i] * spow(gap[i], 0.5) + params.k_o1 * e1[i];
        z_dot[i] = a0[i] * sgn(gap[i]);
    }

    let dp = g1_dot.fixed_rows::<3>(0) * dt;
    let dr: Vector3 = g1_dot.fixed_rows::<3>(3) * dt;
    let z_hat = (st.z_hat + z_dot * dt).map(|z| z.clamp(-params.z_sat, params.z_sat));
    let next = ObserverState {
        p_hat: st.p_hat + dp,
        xi_hat: quat_mul(&axis_to_quat(&dr), &st.xi_hat).canonical(),
        g2_hat: st.g2_hat + g2_dot * dt,
        z_hat,
        ema_vel: ema_velocity(st, x_meas, params.alpha_e, dt),
        last: *x_meas,
        innovation: e1,
    };
    if !next.is_finite() {
        return Err(Error::ObserverDiverged("non-finite observer state".into()));
    }
    Ok(next)
}

/// Pose and twist passed to the controller, with per-channel branch flags
/// (`true` = observer estimate used).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub pose: Pose,
    pub twist: Vector6,
    pub pos_from_observer: [bool; 6],
    pub vel_from_observer: [bool; 6],
}

impl Selection {
    /// True when every channel uses the observer.
    pub fn all_observer(&self) -> bool {
        self.pos_from_observer.iter().chain(&self.vel_from_observer).all(|b| *b)
    }
}

/// Per-channel selection between observer estimates and raw / EMA values.
///
/// A channel uses the observer when the gap is `≤ η_q`. The three
/// orientation channels switch together, since the orientation is a single
/// quaternion.
pub fn select_outputs(st: &ObserverState, x_meas: &Pose, params: &ObserverParams) -> Selection {
    let eta = params.eta_q;
    let gap_x = innovation(x_meas, &st.p_hat, &st.xi_hat);
    let gap_v = st.g2_hat - st.ema_vel;
    let mut pos = [false; 6];
    let mut vel = [false; 6];
    for i in 0..3 {
        pos[i] = gap_x[i].abs() <= eta;
        vel[i] = gap_v[i].abs() <= eta;
    }
    let rot_pos = (3..6).all(|i| gap_x[i].abs() <= eta);
    let rot_vel = (3..6).all(|i| gap_v[i].abs() <= eta);
    for i in 3..6 {
        pos[i] = rot_pos;
        vel[i] = rot_vel;
    }
    let mut p = x_meas.p;
    for i in 0..3 {
        if pos[i] {
            p[i] = st.p_hat[i];
        }
    }
    let xi = if rot_pos { st.xi_hat } else { x_meas.xi };
    let mut twist = st.ema_vel;
    for i in 0..6 {
        if vel[i] && st.g2_hat[i].is_finite() {
            twist[i] = st.g2_hat[i];
        }
    }
    if !twist.iter().all(|v| v.is_finite()) {
        twist = Vector6::zeros();
    }
    Selection { pose: Pose::new(p, xi), twist, pos_from_observer: pos, vel_from_observer: vel }
}
