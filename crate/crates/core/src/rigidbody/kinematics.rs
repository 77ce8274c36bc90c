use super::ChainModel;
use crate::rotation::{Pose, UnitQuat};
use crate::{DMatrix, DVector, Matrix3, Vector3};
use nalgebra::Rotation3;

/// World-frame placement of one link after its joint rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFrame {
    /// Link orientation.
    pub rot: Matrix3,
    /// Joint origin (also the link-frame origin).
    pub origin: Vector3,
    /// Unit joint axis in world coordinates.
    pub axis: Vector3,
    /// Center of mass in world coordinates.
    pub com: Vector3,
}

/// Frames of all links plus the tool frame `(R, p)`.
pub fn link_frames(model: &ChainModel, q: &DVector) -> (Vec<LinkFrame>, (Matrix3, Vector3)) {
    assert_eq!(q.len(), model.dof(), "joint vector length mismatch");
    let mut r = Matrix3::identity();
    let mut p = Vector3::zeros();
    let mut frames = Vec::with_capacity(model.dof());
    for (c, &qi) in model.cache.iter().zip(q.iter()) {
        p += r * c.origin_pos;
        r *= c.origin_rot;
        let axis = r * c.axis.into_inner();
        r *= Rotation3::from_axis_angle(&c.axis, qi).into_inner();
        frames.push(LinkFrame { rot: r, origin: p, axis, com: p + r * c.com });
    }
    let tool_p = p + r * model.tool.translation();
    let tool_r = r * model.tool_rot;
    (frames, (tool_r, tool_p))
}

/// End-effector pose (tool frame) with a canonical unit quaternion.
pub fn forward_kinematics(model: &ChainModel, q: &DVector) -> Pose {
    let (_, (r, p)) = link_frames(model, q);
    Pose::new(p, UnitQuat::from_rotation_matrix(&r))
}

fn jacobian_from(frames: &[LinkFrame], ee: &Vector3) -> DMatrix {
    let mut j = DMatrix::zeros(6, frames.len());
    for (i, f) in frames.iter().enumerate() {
        let v = f.axis.cross(&(ee - f.origin));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&v);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&f.axis);
    }
    j
}

/// Geometric Jacobian mapping `dq` to the tool twist `(ṗ, ω)` in world coordinates.
pub fn jacobian(model: &ChainModel, q: &DVector) -> DMatrix {
    let (frames, (_, p)) = link_frames(model, q);
    jacobian_from(&frames, &p)
}

pub(crate) fn jacobian_and_dot(model: &ChainModel, q: &DVector, dq: &DVector) -> (DMatrix, DMatrix) {
    let (frames, (_, p)) = link_frames(model, q);
    let j = jacobian_from(&frames, &p);
    let n = frames.len();
    let pdot: Vector3 = j.fixed_rows::<3>(0) * dq;

    let mut jd = DMatrix::zeros(6, n);
    // angular velocity of the frame carrying axis i, and velocity of origin i
    let mut w = Vector3::zeros();
    let mut odot = Vector3::zeros();
    let mut prev_origin = Vector3::zeros();
    for (i, f) in frames.iter().enumerate() {
        odot += w.cross(&(f.origin - prev_origin));
        prev_origin = f.origin;
        let zdot = w.cross(&f.axis);
        let col = zdot.cross(&(p - f.origin)) + f.axis.cross(&(pdot - odot));
        jd.fixed_view_mut::<3, 1>(0, i).copy_from(&col);
        jd.fixed_view_mut::<3, 1>(3, i).copy_from(&zdot);
        w += f.axis * dq[i];
    }
    (j, jd)
}

/// Time derivative of [`jacobian`] along the motion `(q, dq)`.
pub fn jacobian_dot(model: &ChainModel, q: &DVector, dq: &DVector) -> DMatrix {
    jacobian_and_dot(model, q, dq).1
}
