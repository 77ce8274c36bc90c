use super::dynamics::{joint_space_dynamics, JointDynamics};
use super::friction::{friction_torque, static_friction, FrictionModel};
use super::{ChainModel, JointState};
use crate::error::{Error, Result};
use crate::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Clamp positions to the declared joint limits (and stop the joint there).
    pub clamp_limits: bool,
    /// Treat the linear friction terms implicitly. Needed when viscous
    /// friction is stiff relative to the distal link inertias.
    pub implicit_damping: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { clamp_limits: true, implicit_damping: true }
    }
}

fn check(state: &JointState, t: &str) -> Result<()> {
    if state.is_finite() {
        Ok(())
    } else {
        Err(Error::Integration(format!("non-finite joint state after {t} step")))
    }
}

/// One semi-implicit Euler step (`dq` first, then `q` with the new `dq`).
///
/// `ddq = M⁻¹(τ + τ_ext + τ_f − C q̇ − G)`.
pub fn step_forward_dynamics(
    model: &ChainModel,
    f: &FrictionModel,
    state: &JointState,
    tau: &DVector,
    tau_ext: &DVector,
    dt: f64,
) -> Result<JointState> {
    step_with(model, f, state, tau, tau_ext, dt, StepOptions::default(), None)
}

/// [`step_forward_dynamics`] with explicit options and optionally reused
/// joint dynamics evaluated at `state`.
#[allow(clippy::too_many_arguments)]
pub fn step_with(
    model: &ChainModel,
    f: &FrictionModel,
    state: &JointState,
    tau: &DVector,
    tau_ext: &DVector,
    dt: f64,
    opts: StepOptions,
    dynamics: Option<&JointDynamics>,
) -> Result<JointState> {
    if !(dt > 0.0) {
        return Err(Error::Integration(format!("time step must be positive, got {dt}")));
    }
    let n = model.dof();
    let owned;
    let d = match dynamics {
        Some(d) => d,
        None => {
            owned = joint_space_dynamics(model, &state.q, &state.dq);
            &owned
        }
    };
    let dq = &state.dq;
    let net = tau + tau_ext - &d.cqd - &d.g;
    let stat = static_friction(f, dq, &net);

    let (lhs, rhs) = if opts.implicit_damping {
        // (M + dt D) dq' = M dq + dt (net + coulomb + static)
        let damp = f.linear_damping();
        let lhs = &d.m + DMatrix::from_diagonal(&(damp * dt));
        let rhs = &d.m * dq + (&net + f.coulomb(dq) + &stat) * dt;
        (lhs, rhs)
    } else {
        let rhs = &d.m * dq + (&net + friction_torque(f, dq) + &stat) * dt;
        (d.m.clone(), rhs)
    };
    let dq_new = lhs
        .cholesky()
        .ok_or_else(|| Error::Integration("iteration matrix is not positive definite".into()))?
        .solve(&rhs);
    let mut q_new = &state.q + &dq_new * dt;
    let mut dq_new = dq_new;
    if opts.clamp_limits {
        for i in 0..n {
            let lim = &model.links[i].limits;
            if q_new[i] > lim.upper {
                q_new[i] = lim.upper;
                dq_new[i] = dq_new[i].min(0.0);
            } else if q_new[i] < lim.lower {
                q_new[i] = lim.lower;
                dq_new[i] = dq_new[i].max(0.0);
            }
        }
    }
    let ddq = (&dq_new - dq) / dt;
    let out = JointState { q: q_new, dq: dq_new, ddq };
    check(&out, "semi-implicit Euler")?;
    Ok(out)
}

fn accel(model: &ChainModel, f: &FrictionModel, q: &DVector, dq: &DVector, tau: &DVector) -> Result<DVector> {
    let d = joint_space_dynamics(model, q, dq);
    let rhs = tau + friction_torque(f, dq) - &d.cqd - &d.g;
    d.m.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Integration("mass matrix is not positive definite".into()))
}

/// Classical RK4 step with smooth friction only (no stiction clamp, no limits).
/// Intended for reference solutions.
pub fn step_rk4(
    model: &ChainModel,
    f: &FrictionModel,
    state: &JointState,
    tau: &DVector,
    tau_ext: &DVector,
    dt: f64,
) -> Result<JointState> {
    if !(dt > 0.0) {
        return Err(Error::Integration(format!("time step must be positive, got {dt}")));
    }
    let t = tau + tau_ext;
    let (q, v) = (&state.q, &state.dq);
    let a1 = accel(model, f, q, v, &t)?;
    let (q2, v2) = (q + v * (dt / 2.0), v + &a1 * (dt / 2.0));
    let a2 = accel(model, f, &q2, &v2, &t)?;
    let (q3, v3) = (q + &v2 * (dt / 2.0), v + &a2 * (dt / 2.0));
    let a3 = accel(model, f, &q3, &v3, &t)?;
    let (q4, v4) = (q + &v3 * dt, v + &a3 * dt);
    let a4 = accel(model, f, &q4, &v4, &t)?;
    let q_new = q + (v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0);
    let dq_new = v + (&a1 + &a2 * 2.0 + &a3 * 2.0 + &a4) * (dt / 6.0);
    let ddq = (&dq_new - v) / dt;
    let out = JointState { q: q_new, dq: dq_new, ddq };
    check(&out, "RK4")?;
    Ok(out)
}
