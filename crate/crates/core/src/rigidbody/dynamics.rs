use super::kinematics::{jacobian_and_dot, link_frames};
use super::ChainModel;
use crate::error::{Error, Result};
use crate::{DMatrix, DVector, Matrix6, Vector3, Vector6};

/// Above this smallest singular value no damping is applied.
pub const SIGMA_RAMP_HI: f64 = 0.05;
/// At and below this smallest singular value damping is saturated at [`LAMBDA_MAX`].
pub const SIGMA_RAMP_LO: f64 = 0.005;
pub const LAMBDA_MAX: f64 = 0.05;
/// Below this smallest singular value the task projection is refused.
pub const HARD_SIGMA_FLOOR: f64 = 1e-4;

/// Recursive Newton–Euler inverse dynamics in world coordinates.
///
/// Returns joint torques for `(q, dq, ddq)` including gravity.
pub fn rnea(model: &ChainModel, q: &DVector, dq: &DVector, ddq: &DVector) -> DVector {
    rnea_with_gravity(model, q, dq, ddq, &model.gravity)
}

fn rnea_with_gravity(model: &ChainModel, q: &DVector, dq: &DVector, ddq: &DVector, g: &Vector3) -> DVector {
    let n = model.dof();
    let (frames, _) = link_frames(model, q);
    let mut forces = Vec::with_capacity(n);
    let mut moments = Vec::with_capacity(n);

    let mut w = Vector3::zeros();
    let mut wd = Vector3::zeros();
    // gravity enters as an upward base acceleration
    let mut a_origin = -g;
    let mut prev_origin = Vector3::zeros();
    for (i, f) in frames.iter().enumerate() {
        let r = f.origin - prev_origin;
        a_origin += wd.cross(&r) + w.cross(&w.cross(&r));
        prev_origin = f.origin;

        let w_new = w + f.axis * dq[i];
        wd += f.axis * ddq[i] + w.cross(&(f.axis * dq[i]));
        w = w_new;

        let rc = f.com - f.origin;
        let a_com = a_origin + wd.cross(&rc) + w.cross(&w.cross(&rc));
        let c = &model.cache[i];
        let iw = f.rot * c.inertia * f.rot.transpose();
        forces.push(a_com * model.links[i].mass);
        moments.push(iw * wd + w.cross(&(iw * w)));
    }

    let mut tau = DVector::zeros(n);
    let mut f_next = Vector3::zeros();
    let mut n_next = Vector3::zeros();
    let mut next_origin = Vector3::zeros();
    for i in (0..n).rev() {
        let fr = &frames[i];
        let fi = forces[i] + f_next;
        let ni =
            moments[i] + n_next + (fr.com - fr.origin).cross(&forces[i]) + (next_origin - fr.origin).cross(&f_next);
        tau[i] = fr.axis.dot(&ni) + model.links[i].armature * ddq[i];
        f_next = fi;
        n_next = ni;
        next_origin = fr.origin;
    }
    tau
}

/// Joint-space inertia `M(q) = Σ m Jvᵀ Jv + Jωᵀ I Jω` over link centers of mass,
/// plus the armature on the diagonal.
pub fn mass_matrix(model: &ChainModel, q: &DVector) -> DMatrix {
    let n = model.dof();
    let (frames, _) = link_frames(model, q);
    let mut m = DMatrix::zeros(n, n);
    for (i, f) in frames.iter().enumerate() {
        let mass = model.links[i].mass;
        let iw = f.rot * model.cache[i].inertia * f.rot.transpose();
        let jv: Vec<Vector3> = frames[..=i].iter().map(|fj| fj.axis.cross(&(f.com - fj.origin))).collect();
        for a in 0..=i {
            let iza = iw * frames[a].axis;
            for b in 0..=a {
                let v = mass * jv[a].dot(&jv[b]) + frames[b].axis.dot(&iza);
                m[(a, b)] += v;
                if a != b {
                    m[(b, a)] += v;
                }
            }
        }
        m[(i, i)] += model.links[i].armature;
    }
    m
}

pub fn gravity_torque(model: &ChainModel, q: &DVector) -> DVector {
    let z = DVector::zeros(model.dof());
    rnea(model, q, &z, &z)
}

/// `M`, `C(q, dq) dq` and `G` at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDynamics {
    pub m: DMatrix,
    pub cqd: DVector,
    pub g: DVector,
}

pub fn joint_space_dynamics(model: &ChainModel, q: &DVector, dq: &DVector) -> JointDynamics {
    let z = DVector::zeros(model.dof());
    let g = rnea(model, q, &z, &z);
    let cqd = rnea_with_gravity(model, q, dq, &z, &Vector3::zeros());
    JointDynamics { m: mass_matrix(model, q), cqd, g }
}

const FD_STEP: f64 = 1e-6;

fn mass_partials(model: &ChainModel, q: &DVector) -> Vec<DMatrix> {
    (0..model.dof())
        .map(|k| {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += FD_STEP;
            qm[k] -= FD_STEP;
            (mass_matrix(model, &qp) - mass_matrix(model, &qm)) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Christoffel-consistent Coriolis matrix
/// `C_kj = Σ_i ½ (∂M_kj/∂q_i + ∂M_ki/∂q_j − ∂M_ij/∂q_k) dq_i`,
/// with the partials of `M` by central differences.
pub fn coriolis_matrix(model: &ChainModel, q: &DVector, dq: &DVector) -> DMatrix {
    let n = model.dof();
    let dm = mass_partials(model, q);
    let mut c = DMatrix::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += 0.5 * (dm[i][(k, j)] + dm[j][(k, i)] - dm[k][(i, j)]) * dq[i];
            }
            c[(k, j)] = s;
        }
    }
    c
}

/// `dM/dt` along `dq`, by central differences.
pub fn mass_matrix_dot(model: &ChainModel, q: &DVector, dq: &DVector) -> DMatrix {
    let h = FD_STEP;
    (mass_matrix(model, &(q + dq * h)) - mass_matrix(model, &(q - dq * h))) / (2.0 * h)
}

/// How the task-space projection is regularized.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Damping {
    /// Ramp `λ` with the smallest singular value of `J`.
    #[default]
    Auto,
    Fixed(f64),
}

fn ramp_lambda(sigma: f64) -> f64 {
    if sigma >= SIGMA_RAMP_HI {
        0.0
    } else if sigma <= SIGMA_RAMP_LO {
        LAMBDA_MAX
    } else {
        LAMBDA_MAX * (SIGMA_RAMP_HI - sigma) / (SIGMA_RAMP_HI - SIGMA_RAMP_LO)
    }
}

/// Task-space (operational-space) dynamics at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDynamics {
    pub mbar: Matrix6,
    pub cbar: Vector6,
    pub gbar: Vector6,
    pub j: DMatrix,
    pub jdot: DMatrix,
    /// Damping actually used.
    pub lambda: f64,
    pub sigma_min: f64,
    pub joint: JointDynamics,
    pub minv: DMatrix,
}

pub fn task_space_dynamics(model: &ChainModel, q: &DVector, dq: &DVector, damping: Damping) -> Result<TaskDynamics> {
    let (j, jdot) = jacobian_and_dot(model, q, dq);
    let sv = j.clone().svd(false, false).singular_values;
    let sigma_min = sv.min();
    if !(sigma_min >= HARD_SIGMA_FLOOR) {
        return Err(Error::Singularity { sigma_min, floor: HARD_SIGMA_FLOOR });
    }
    let lambda = match damping {
        Damping::Auto => ramp_lambda(sigma_min),
        Damping::Fixed(l) => l.max(0.0),
    };
    let joint = joint_space_dynamics(model, q, dq);
    let minv = joint
        .m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("mass matrix is not positive definite".into()))?
        .inverse();
    let jminv = &j * &minv;
    let a = &jminv * j.transpose();
    let mut a6 = Matrix6::from_iterator(a.iter().copied());
    a6 += Matrix6::identity() * (lambda * lambda);
    let mbar = a6.cholesky().ok_or(Error::Singularity { sigma_min, floor: HARD_SIGMA_FLOOR })?.inverse();
    let to6 = |v: DVector| Vector6::from_iterator(v.iter().copied());
    let cbar = mbar * to6(&jminv * &joint.cqd - &jdot * dq);
    let gbar = mbar * to6(&jminv * &joint.g);
    Ok(TaskDynamics { mbar, cbar, gbar, j, jdot, lambda, sigma_min, joint, minv })
}

impl TaskDynamics {
    /// `Jᵀ u` for a task wrench `u`.
    pub fn joint_torque(&self, u: &Vector6) -> DVector {
        self.j.transpose() * DVector::from_column_slice(u.as_slice())
    }

    /// Dynamically consistent null-space projection `Nᵀ τ0 = τ0 − Jᵀ M̄ J M⁻¹ τ0`.
    pub fn null_space_projection(&self, tau0: &DVector) -> DVector {
        let x = &self.j * (&self.minv * tau0);
        let f = self.mbar * Vector6::from_iterator(x.iter().copied());
        tau0 - self.joint_torque(&f)
    }
}
