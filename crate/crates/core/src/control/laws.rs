use super::{
    adapt_gains, linear_surface, signed_pow6, sliding_surface, smooth_sign, task_accel, wrench, AdaptiveParams,
    SlidingParams, SlidingState, TrackingError,
};
use crate::error::Result;
use crate::rigidbody::TaskDynamics;
use crate::rotation::HMatrix;
use crate::trajgen::TrajectorySample;
use crate::Vector6;
use serde::{Deserialize, Serialize};

/// Anti-windup bound on the super-twisting integral state.
pub const NU_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGains {
    pub kp_trans: f64,
    pub kp_rot: f64,
}

impl PdGains {
    pub const LOW: PdGains = PdGains { kp_trans: 200.0, kp_rot: 50.0 };
    pub const MED: PdGains = PdGains { kp_trans: 800.0, kp_rot: 200.0 };
    pub const HIGH: PdGains = PdGains { kp_trans: 2000.0, kp_rot: 500.0 };

    pub fn kp(&self) -> Vector6 {
        let (t, r) = (self.kp_trans, self.kp_rot);
        Vector6::new(t, t, t, r, r, r)
    }
}

/// Which control law to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControllerSpec {
    /// Adaptive non-singular terminal super-twisting law.
    Ntstsm,
    /// Same law with the fixed ratio `κ₂ = ¼ Γ κ₁`.
    NtstsmConstrained,
    Ntsm,
    Stsm,
    PdLow,
    PdMed,
    PdHigh,
    Pd(PdGains),
}

impl ControllerSpec {
    pub fn name(&self) -> String {
        match self {
            ControllerSpec::Ntstsm => "ntstsm".into(),
            ControllerSpec::NtstsmConstrained => "ntstsm-constrained".into(),
            ControllerSpec::Ntsm => "ntsm".into(),
            ControllerSpec::Stsm => "stsm".into(),
            ControllerSpec::PdLow => "pd-low".into(),
            ControllerSpec::PdMed => "pd-med".into(),
            ControllerSpec::PdHigh => "pd-high".into(),
            ControllerSpec::Pd(g) => format!("pd({},{})", g.kp_trans, g.kp_rot),
        }
    }

    pub fn pd_gains(&self) -> Option<PdGains> {
        match self {
            ControllerSpec::PdLow => Some(PdGains::LOW),
            ControllerSpec::PdMed => Some(PdGains::MED),
            ControllerSpec::PdHigh => Some(PdGains::HIGH),
            ControllerSpec::Pd(g) => Some(*g),
            _ => None,
        }
    }

    pub fn is_sliding(&self) -> bool {
        self.pd_gains().is_none()
    }

    /// Uses the terminal surface `e + βė^α` (as opposed to the linear one).
    pub fn terminal_surface(&self) -> bool {
        !matches!(self, ControllerSpec::Stsm)
    }
}

fn integrate_nu(nu: &Vector6, kappa2: &Vector6, sgn: &Vector6, dt: f64) -> Vector6 {
    (nu - kappa2.component_mul(sgn) * dt).map(|v| v.clamp(-NU_MAX, NU_MAX))
}

/// NT-STSM law:
/// `u = M̄(ẍ_d + H⁻¹(−ė^{2−α}/(αβ) − κ₁|s|^{1/2} tanh(k_s s) + ν)) + C̄ + Ḡ`,
/// followed by `ν ← ν − dt κ₂ tanh(k_s s)`. Gains are taken from `st`.
#[allow(clippy::too_many_arguments)]
pub fn ntstsm_control(
    err: &TrackingError,
    h: &HMatrix,
    s: &Vector6,
    st: &SlidingState,
    dyn_: &TaskDynamics,
    traj: &TrajectorySample,
    p: &SlidingParams,
    dt: f64,
) -> (Vector6, SlidingState) {
    let a = p.alpha();
    let sgn = smooth_sign(s, p.k_s);
    let v = -signed_pow6(&err.de, 2.0 - a) / (a * p.beta)
        - st.kappa1.component_mul(&s.map(|x| x.abs().sqrt())).component_mul(&sgn)
        + st.nu;
    let u = wrench(dyn_, &task_accel(traj, h, &v));
    let mut next = *st;
    next.nu = integrate_nu(&st.nu, &st.kappa2, &sgn, dt);
    next.s = *s;
    (u, next)
}

/// NTSM law: `u = M̄(ẍ_d + H⁻¹(−ė^{2−α}/(αβ) − κ₁ tanh(k_s s₁))) + C̄ + Ḡ`.
pub fn ntsm_control(
    err: &TrackingError,
    h: &HMatrix,
    dyn_: &TaskDynamics,
    traj: &TrajectorySample,
    p: &SlidingParams,
    kappa1: &Vector6,
) -> Vector6 {
    let a = p.alpha();
    let s1 = sliding_surface(err, p);
    let v = -signed_pow6(&err.de, 2.0 - a) / (a * p.beta) - kappa1.component_mul(&smooth_sign(&s1, p.k_s));
    wrench(dyn_, &task_accel(traj, h, &v))
}

/// STSM law on the linear surface `s₂ = e + βė`:
/// `u = M̄(ẍ_d + H⁻¹(−κ₁|s₂|^{1/2} tanh(k_s s₂) + ν)) + C̄ + Ḡ`, `ν̇ = −κ₂ tanh(k_s s₂)`.
pub fn stsm_control(
    err: &TrackingError,
    h: &HMatrix,
    dyn_: &TaskDynamics,
    traj: &TrajectorySample,
    p: &SlidingParams,
    st: &SlidingState,
    dt: f64,
) -> (Vector6, SlidingState) {
    let s2 = linear_surface(err, p);
    let sgn = smooth_sign(&s2, p.k_s);
    let v = -st.kappa1.component_mul(&s2.map(|x| x.abs().sqrt())).component_mul(&sgn) + st.nu;
    let u = wrench(dyn_, &task_accel(traj, h, &v));
    let mut next = *st;
    next.nu = integrate_nu(&st.nu, &st.kappa2, &sgn, dt);
    next.s = s2;
    (u, next)
}

/// `u = −K_p e − 2√K_p ė + C̄ + Ḡ`.
pub fn pd_control(err: &TrackingError, dyn_: &TaskDynamics, gains: &PdGains) -> Vector6 {
    let kp = gains.kp();
    -kp.component_mul(&err.e) - kp.map(f64::sqrt).component_mul(&err.de) * 2.0 + dyn_.cbar + dyn_.gbar
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: Vector6,
    /// Surface used by the law (zero for PD).
    pub s: Vector6,
}

/// A control law together with its parameters and internal state.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub spec: ControllerSpec,
    pub sliding: SlidingParams,
    pub adaptive: AdaptiveParams,
    pub state: SlidingState,
}

impl Controller {
    pub fn new(spec: ControllerSpec, sliding: SlidingParams, adaptive: AdaptiveParams) -> Result<Self> {
        sliding.validate()?;
        adaptive.validate()?;
        if let Some(g) = spec.pd_gains() {
            if !(g.kp_trans > 0.0 && g.kp_rot > 0.0) {
                return Err(crate::Error::Config("PD gains must be positive".into()));
            }
        }
        Ok(Controller { spec, sliding, adaptive, state: SlidingState::new(&sliding, &adaptive) })
    }

    /// Surface the law drives to zero.
    pub fn surface(&self, err: &TrackingError) -> Vector6 {
        if self.spec.terminal_surface() {
            sliding_surface(err, &self.sliding)
        } else {
            linear_surface(err, &self.sliding)
        }
    }

    /// Adapt gains, compute `u`, then integrate `ν`.
    pub fn step(
        &mut self,
        err: &TrackingError,
        h: &HMatrix,
        dyn_: &TaskDynamics,
        traj: &TrajectorySample,
        dt: f64,
    ) -> ControlOutput {
        if let Some(g) = self.spec.pd_gains() {
            return ControlOutput { u: pd_control(err, dyn_, &g), s: Vector6::zeros() };
        }
        let (p, a) = (&self.sliding, &self.adaptive);
        let s = self.surface(err);
        let mut st = adapt_gains(&self.state, &s, p, a, dt);
        let u = match self.spec {
            ControllerSpec::Ntstsm => {
                let (u, next) = ntstsm_control(err, h, &s, &st, dyn_, traj, p, dt);
                st = next;
                u
            }
            ControllerSpec::NtstsmConstrained => {
                st.kappa2 = p.gamma_of(&err.de).component_mul(&st.kappa1) * 0.25;
                let (u, next) = ntstsm_control(err, h, &s, &st, dyn_, traj, p, dt);
                st = next;
                u
            }
            ControllerSpec::Stsm => {
                let (u, next) = stsm_control(err, h, dyn_, traj, p, &st, dt);
                st = next;
                u
            }
            ControllerSpec::Ntsm => ntsm_control(err, h, dyn_, traj, p, &st.kappa1),
            _ => unreachable!("PD handled above"),
        };
        self.state = st;
        ControlOutput { u, s }
    }
}
