//! Desired-trajectory synthesis.
//!
//! Translation follows clamped cubic splines through waypoints; orientation
//! is blended per segment along the relative rotation vector with the cubic
//! Hermite weight `W = 3s² − 2s³`. The desired angular velocity is obtained
//! from consecutive orientation samples and the desired angular acceleration
//! by a backward difference, mirroring a sampled 1 kHz pipeline.

use crate::error::{Error, Result};
use crate::rotation::{axis_to_quat, quat_error, quat_mul, quat_to_axis, Pose, UnitQuat};
use crate::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// `W(t) = 3(t/T)² − 2(t/T)³`, clamped outside `[0, T]`.
pub fn blend_weight(t: f64, duration: f64) -> f64 {
    let s = (t / duration).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

pub fn blend_weight_dot(t: f64, duration: f64) -> f64 {
    let s = (t / duration).clamp(0.0, 1.0);
    6.0 * s * (1.0 - s) / duration
}

pub fn blend_weight_ddot(t: f64, duration: f64) -> f64 {
    if !(0.0..=duration).contains(&t) {
        return 0.0;
    }
    let s = t / duration;
    6.0 * (1.0 - 2.0 * s) / (duration * duration)
}

/// One point-to-point segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub start: Pose,
    pub goal: Pose,
    pub duration: f64,
    /// Relative rotation vector `log(ξ_g ⊗ ξ_0*)`.
    rotvec: Vector3,
}

impl SegmentSpec {
    pub fn new(start: Pose, goal: Pose, duration: f64) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::Config(format!("segment duration must be positive, got {duration}")));
        }
        let rotvec = quat_to_axis(&quat_mul(&goal.xi, &start.xi.conj()));
        if rotvec.norm() >= PI - 1e-9 {
            return Err(Error::Config("relative segment rotation must be below π".into()));
        }
        Ok(SegmentSpec { start, goal, duration, rotvec })
    }

    pub fn rotation_vector(&self) -> Vector3 {
        self.rotvec
    }
}

/// Cubic-Hermite translation of one segment: `(p, v, a)`.
pub fn interp_translation(seg: &SegmentSpec, t: f64) -> (Vector3, Vector3, Vector3) {
    let d = seg.goal.p - seg.start.p;
    let w = blend_weight(t, seg.duration);
    let p = if w == 1.0 { seg.goal.p } else { seg.start.p + d * w };
    (p, d * blend_weight_dot(t, seg.duration), d * blend_weight_ddot(t, seg.duration))
}

/// Orientation `normalize(exp(W · log(ξ_g ⊗ ξ_0*)) ⊗ ξ_0)`.
pub fn interp_quaternion(seg: &SegmentSpec, t: f64) -> UnitQuat {
    let w = blend_weight(t, seg.duration);
    if w == 0.0 {
        return seg.start.xi;
    }
    if w == 1.0 {
        return seg.goal.xi;
    }
    quat_mul(&axis_to_quat(&(seg.rotvec * w)), &seg.start.xi)
}

/// `ω_d = (2/Δt) · vec(ξ_now ⊗ ξ_prev*)`, with the product sign-aligned so the
/// shorter rotation is taken. Expressed in the fixed frame.
pub fn desired_angular_velocity(xi_now: &UnitQuat, xi_prev: &UnitQuat, dt: f64) -> Vector3 {
    let (e, ep) = (xi_now.eta, xi_prev.eta);
    let (s, sp) = (&xi_now.eps, &xi_prev.eps);
    let mut v = ep * s - e * sp - s.cross(sp);
    if e * ep + s.dot(sp) < 0.0 {
        v = -v;
    }
    v * (2.0 / dt)
}

pub fn desired_angular_acceleration(w_now: &Vector3, w_prev: &Vector3, dt: f64) -> Vector3 {
    (w_now - w_prev) / dt
}

/// True when the orientation error between the desired and actual pose is
/// larger than `eps_bar` (the desired pose should stay close to the robot).
pub fn assumption1_violated(xi_d: &UnitQuat, xi: &UnitQuat, eps_bar: f64) -> bool {
    quat_error(xi, xi_d).eps_t.norm() > eps_bar
}

/// Clamped cubic spline of one scalar through `(t_k, y_k)` with prescribed
/// end slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampedSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl ClampedSpline {
    pub fn new(t: &[f64], y: &[f64], v0: f64, vn: f64) -> Result<Self> {
        let n = t.len();
        if n < 2 || y.len() != n {
            return Err(Error::Config("spline needs at least two knots".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("spline knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        // tridiagonal system (sub a, diag b, super c) for the knot curvatures
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut r = vec![0.0; n];
        b[0] = 2.0 * h[0];
        c[0] = h[0];
        r[0] = 6.0 * (slope[0] - v0);
        for k in 1..n - 1 {
            a[k] = h[k - 1];
            b[k] = 2.0 * (h[k - 1] + h[k]);
            c[k] = h[k];
            r[k] = 6.0 * (slope[k] - slope[k - 1]);
        }
        a[n - 1] = h[n - 2];
        b[n - 1] = 2.0 * h[n - 2];
        r[n - 1] = 6.0 * (vn - slope[n - 2]);
        // Thomas algorithm; the system is strictly diagonally dominant
        for k in 1..n {
            let w = a[k] / b[k - 1];
            b[k] -= w * c[k - 1];
            r[k] -= w * r[k - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = r[n - 1] / b[n - 1];
        for k in (0..n - 1).rev() {
            m[k] = (r[k] - c[k] * m[k + 1]) / b[k];
        }
        Ok(ClampedSpline { t: t.to_vec(), y: y.to_vec(), m })
    }

    /// Value, first and second derivative. Constant outside the knot range.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let n = self.t.len();
        if t <= self.t[0] {
            return (self.y[0], 0.0, 0.0);
        }
        if t >= self.t[n - 1] {
            return (self.y[n - 1], 0.0, 0.0);
        }
        let k = self.t.partition_point(|&tk| tk <= t) - 1;
        let h = self.t[k + 1] - self.t[k];
        let (a, b) = (self.t[k + 1] - t, t - self.t[k]);
        let (mk, mk1) = (self.m[k], self.m[k + 1]);
        let ck = self.y[k] / h - mk * h / 6.0;
        let ck1 = self.y[k + 1] / h - mk1 * h / 6.0;
        let p = mk * a.powi(3) / (6.0 * h) + mk1 * b.powi(3) / (6.0 * h) + ck * a + ck1 * b;
        let v = -mk * a * a / (2.0 * h) + mk1 * b * b / (2.0 * h) - ck + ck1;
        let acc = (mk * a + mk1 * b) / h;
        (p, v, acc)
    }
}

/// Offset relative to the trajectory's start pose. The rotation is
/// `R_z(z) R_y(y) R_x(x)` applied in the fixed frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseOffset {
    #[serde(default)]
    pub dp: [f64; 3],
    /// `[z, y, x]` angles in degrees.
    #[serde(default)]
    pub rot_zyx_deg: [f64; 3],
}

impl PoseOffset {
    pub fn apply(&self, start: &Pose) -> Pose {
        let [z, y, x] = self.rot_zyx_deg.map(f64::to_radians);
        let r = quat_mul(
            &quat_mul(&UnitQuat::from_axis_angle(&Vector3::z(), z), &UnitQuat::from_axis_angle(&Vector3::y(), y)),
            &UnitQuat::from_axis_angle(&Vector3::x(), x),
        );
        Pose::new(start.p + Vector3::from(self.dp), quat_mul(&r, &start.xi).canonical())
    }
}

fn yes() -> bool {
    true
}

/// One waypoint reached `duration` seconds after the previous one.
///
/// Exactly one of `pose` (absolute) or `offset` (relative to the start
/// pose) may be given; neither means "the start pose".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<PoseOffset>,
    pub duration: f64,
    /// Come to rest at this waypoint. Consecutive non-stop waypoints share
    /// one translation spline.
    #[serde(default = "yes")]
    pub stop: bool,
}

impl WaypointSpec {
    pub fn hold(duration: f64) -> Self {
        WaypointSpec { pose: None, offset: None, duration, stop: true }
    }

    pub fn offset(dp: [f64; 3], rot_zyx_deg: [f64; 3], duration: f64) -> Self {
        WaypointSpec { pose: None, offset: Some(PoseOffset { dp, rot_zyx_deg }), duration, stop: true }
    }

    fn resolve(&self, start: &Pose) -> Result<Pose> {
        match (&self.pose, &self.offset) {
            (Some(_), Some(_)) => Err(Error::Config("waypoint has both pose and offset".into())),
            (Some(p), None) => Ok(*p),
            (None, Some(o)) => Ok(o.apply(start)),
            (None, None) => Ok(*start),
        }
    }
}

/// Per-axis sinusoid around the start pose:
/// `p = p0 + A sin(2πft)`, `ξ = exp(B sin(2πft)) ⊗ ξ0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidSpec {
    pub amplitude_p: [f64; 3],
    /// Rotation-vector amplitude (rad).
    pub amplitude_rot: [f64; 3],
    pub frequency_hz: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    Waypoints { waypoints: Vec<WaypointSpec> },
    Sinusoid(SinusoidSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub p_d: Vector3,
    pub xi_d: UnitQuat,
    pub v_d: Vector3,
    pub w_d: Vector3,
    pub a_d: Vector3,
    pub dw_d: Vector3,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    t0: f64,
    seg: SegmentSpec,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Waypoints {
        segments: Vec<Segment>,
        /// Translation splines, one per run between stops: `(t0, t1, [x, y, z])`.
        splines: Vec<(f64, f64, [ClampedSpline; 3])>,
    },
    Sinusoid {
        start: Pose,
        spec: SinusoidSpec,
    },
}

/// A resolved trajectory that can be sampled at any time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    kind: Kind,
    duration: f64,
}

impl Trajectory {
    pub fn from_spec(spec: &TrajectorySpec, start: &Pose) -> Result<Self> {
        match spec {
            TrajectorySpec::Waypoints { waypoints } => Self::waypoints(start, waypoints),
            TrajectorySpec::Sinusoid(s) => {
                if !(s.duration > 0.0) || !(s.frequency_hz >= 0.0) {
                    return Err(Error::Config("sinusoid needs positive duration and frequency ≥ 0".into()));
                }
                if Vector3::from(s.amplitude_rot).norm() >= PI {
                    return Err(Error::Config("sinusoid rotation amplitude must be below π".into()));
                }
                Ok(Trajectory { kind: Kind::Sinusoid { start: *start, spec: *s }, duration: s.duration })
            }
        }
    }

    pub fn waypoints(start: &Pose, wps: &[WaypointSpec]) -> Result<Self> {
        if wps.is_empty() {
            return Err(Error::Config("trajectory needs at least one waypoint".into()));
        }
        let mut segments = Vec::with_capacity(wps.len());
        let mut t = 0.0;
        let mut prev = *start;
        let mut knots_t = vec![0.0];
        let mut knots_p = vec![start.p];
        let mut splines = Vec::new();
        for (i, w) in wps.iter().enumerate() {
            let goal = w.resolve(start)?;
            segments.push(Segment { t0: t, seg: SegmentSpec::new(prev, goal, w.duration)? });
            t += w.duration;
            knots_t.push(t);
            knots_p.push(goal.p);
            if w.stop || i + 1 == wps.len() {
                splines.push(Self::spline_run(&knots_t, &knots_p)?);
                knots_t = vec![t];
                knots_p = vec![goal.p];
            }
            prev = goal;
        }
        Ok(Trajectory { kind: Kind::Waypoints { segments, splines }, duration: t })
    }

    fn spline_run(t: &[f64], p: &[Vector3]) -> Result<(f64, f64, [ClampedSpline; 3])> {
        let axis = |k: usize| -> Result<ClampedSpline> {
            let y: Vec<f64> = p.iter().map(|v| v[k]).collect();
            ClampedSpline::new(t, &y, 0.0, 0.0)
        };
        Ok((t[0], t[t.len() - 1], [axis(0)?, axis(1)?, axis(2)?]))
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Start pose (sample at `t = 0`).
    pub fn start(&self) -> Pose {
        self.pose(0.0)
    }

    /// Final pose.
    pub fn end(&self) -> Pose {
        self.pose(self.duration)
    }

    /// Desired pose at `t`; times outside `[0, duration]` are clamped.
    pub fn pose(&self, t: f64) -> Pose {
        self.eval(t).0
    }

    /// Pose plus analytic translational velocity and acceleration.
    fn eval(&self, t: f64) -> (Pose, Vector3, Vector3) {
        let t = t.clamp(0.0, self.duration);
        match &self.kind {
            Kind::Waypoints { segments, splines } => {
                let i = segments.partition_point(|s| s.t0 <= t).saturating_sub(1);
                let s = &segments[i];
                let xi = interp_quaternion(&s.seg, t - s.t0);
                let j = splines.partition_point(|(t0, _, _)| *t0 <= t).saturating_sub(1);
                let sp = &splines[j].2;
                let (x, y, z) = (sp[0].eval(t), sp[1].eval(t), sp[2].eval(t));
                (Pose::new(Vector3::new(x.0, y.0, z.0), xi), Vector3::new(x.1, y.1, z.1), Vector3::new(x.2, y.2, z.2))
            }
            Kind::Sinusoid { start, spec } => {
                let w = 2.0 * PI * spec.frequency_hz;
                let (s, c) = (w * t).sin_cos();
                let a = Vector3::from(spec.amplitude_p);
                let b = Vector3::from(spec.amplitude_rot);
                let xi = quat_mul(&axis_to_quat(&(b * s)), &start.xi);
                (Pose::new(start.p + a * s, xi), a * (w * c), a * (-w * w * s))
            }
        }
    }

    /// Analytic angular velocity and acceleration (fixed frame).
    pub fn angular_rates_analytic(&self, t: f64) -> (Vector3, Vector3) {
        if t < 0.0 || t > self.duration {
            return (Vector3::zeros(), Vector3::zeros());
        }
        match &self.kind {
            Kind::Waypoints { segments, .. } => {
                let i = segments.partition_point(|s| s.t0 <= t).saturating_sub(1);
                let s = &segments[i];
                let tau = t - s.t0;
                let th = s.seg.rotation_vector();
                (th * blend_weight_dot(tau, s.seg.duration), th * blend_weight_ddot(tau, s.seg.duration))
            }
            Kind::Sinusoid { spec, .. } => {
                // single fixed rotation axis, so ω is the derivative of the rotation vector
                let w = 2.0 * PI * spec.frequency_hz;
                let b = Vector3::from(spec.amplitude_rot);
                let (s, c) = (w * t).sin_cos();
                (b * (w * c), b * (-w * w * s))
            }
        }
    }

    /// Sample as produced by a loop running at period `dt`: angular velocity
    /// from the current and previous orientation samples, angular
    /// acceleration by backward difference of that.
    pub fn sample(&self, t: f64, dt: f64) -> TrajectorySample {
        let (pose, v, a) = self.eval(t);
        let xi1 = self.pose(t - dt).xi;
        let xi2 = self.pose(t - 2.0 * dt).xi;
        let w_d = desired_angular_velocity(&pose.xi, &xi1, dt);
        let w_prev = desired_angular_velocity(&xi1, &xi2, dt);
        TrajectorySample {
            t,
            p_d: pose.p,
            xi_d: pose.xi,
            v_d: v,
            w_d,
            a_d: a,
            dw_d: desired_angular_acceleration(&w_d, &w_prev, dt),
        }
    }

    /// Sample with analytic derivatives throughout.
    pub fn sample_analytic(&self, t: f64) -> TrajectorySample {
        let (pose, v, a) = self.eval(t);
        let (w, dw) = self.angular_rates_analytic(t);
        TrajectorySample { t, p_d: pose.p, xi_d: pose.xi, v_d: v, w_d: w, a_d: a, dw_d: dw }
    }

    /// All samples on the grid `0, dt, 2dt, …, duration`.
    pub fn tabulate(&self, dt: f64) -> Vec<TrajectorySample> {
        let n = (self.duration / dt).round() as usize;
        (0..=n).map(|k| self.sample(k as f64 * dt, dt)).collect()
    }
}

pub const SAMPLE_COLUMNS: [&str; 20] = [
    "t", "p_x", "p_y", "p_z", "xi_eta", "xi_x", "xi_y", "xi_z", "v_x", "v_y", "v_z", "w_x", "w_y", "w_z", "a_x", "a_y",
    "a_z", "dw_x", "dw_y", "dw_z",
];

/// Write samples as CSV with [`SAMPLE_COLUMNS`].
pub fn write_samples_csv<W: Write>(out: W, samples: &[TrajectorySample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SAMPLE_COLUMNS)?;
    for s in samples {
        let q = s.xi_d.to_array();
        let mut row = vec![s.t];
        row.extend(s.p_d.iter());
        row.extend(q);
        for v in [&s.v_d, &s.w_d, &s.a_d, &s.dw_d] {
            row.extend(v.iter());
        }
        w.write_record(row.iter().map(|x| format!("{x:.12e}")))?;
    }
    w.flush()?;
    Ok(())
}
