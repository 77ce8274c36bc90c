use crate::error::{Error, Result};
use crate::DVector;
use serde::{Deserialize, Serialize};

/// Joint speed below which the static-friction clamp is active (rad/s).
pub const STICTION_BAND: f64 = 1e-3;

/// Per-joint friction parameters.
///
/// `c` and `mu_v` are both linear in velocity. `mu_s` is the Coulomb /
/// breakaway level (N·m) and `mu_k` the steepness of the smooth sign used
/// for the Coulomb term: `mu_s · tanh(mu_k · dq)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionModel {
    pub c: Vec<f64>,
    pub mu_s: Vec<f64>,
    pub mu_k: Vec<f64>,
    pub mu_v: Vec<f64>,
}

impl FrictionModel {
    pub fn uniform(n: usize, c: f64, mu_s: f64, mu_k: f64, mu_v: f64) -> Self {
        FrictionModel { c: vec![c; n], mu_s: vec![mu_s; n], mu_k: vec![mu_k; n], mu_v: vec![mu_v; n] }
    }

    pub fn none(n: usize) -> Self {
        Self::uniform(n, 0.0, 0.0, 0.0, 0.0)
    }

    /// Tabulated "default" row: light damping plus viscous friction.
    pub fn default_row(n: usize) -> Self {
        Self::uniform(n, 0.003, 0.0, 0.0, 16.0)
    }

    /// Tabulated "simulated" row.
    pub fn simulated_row(n: usize) -> Self {
        Self::uniform(n, 0.003, 0.5, 25.0, 25.0)
    }

    pub fn dof(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let all = [&self.c, &self.mu_s, &self.mu_k, &self.mu_v];
        if all.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidModel(format!("friction model must have {n} entries per field")));
        }
        if all.iter().flat_map(|v| v.iter()).any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidModel("friction coefficients must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Total linear damping `c + mu_v` per joint.
    pub fn linear_damping(&self) -> DVector {
        DVector::from_iterator(self.dof(), self.c.iter().zip(&self.mu_v).map(|(a, b)| a + b))
    }

    /// Smooth Coulomb term `−mu_s tanh(mu_k dq)`.
    pub fn coulomb(&self, dq: &DVector) -> DVector {
        DVector::from_iterator(self.dof(), (0..self.dof()).map(|i| -self.mu_s[i] * (self.mu_k[i] * dq[i]).tanh()))
    }
}

/// Velocity-dependent friction torque: `−(c + mu_v) dq − mu_s tanh(mu_k dq)`.
pub fn friction_torque(f: &FrictionModel, dq: &DVector) -> DVector {
    let lin = f.linear_damping();
    f.coulomb(dq) - lin.component_mul(dq)
}

/// Static friction opposing the net applied torque, up to `mu_s`, on joints
/// that are inside the stiction band.
pub fn static_friction(f: &FrictionModel, dq: &DVector, net: &DVector) -> DVector {
    DVector::from_iterator(
        f.dof(),
        (0..f.dof()).map(|i| if dq[i].abs() < STICTION_BAND { -net[i].clamp(-f.mu_s[i], f.mu_s[i]) } else { 0.0 }),
    )
}
