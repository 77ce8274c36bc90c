//! Run logs and tracking/effort metrics.
//!
//! A [`RunLog`] is a dense per-tick record written as CSV. The first line
//! is a `#`-comment carrying the schema version and run metadata, the
//! second is the column header; floats use Rust's shortest round-trip
//! formatting so identical runs give identical bytes.

use crate::rotation::UnitQuat;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

/// Schema tag written on the first line of every run log.
pub const RUNLOG_SCHEMA: &str = "ntstsm-runlog v1";

/// One control tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tick {
    pub t: f64,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    /// True end-effector position.
    pub p: [f64; 3],
    /// True orientation `(η, εx, εy, εz)`.
    pub xi: [f64; 4],
    pub p_d: [f64; 3],
    pub xi_d: [f64; 4],
    /// Task-space tracking error on the true state.
    pub e: [f64; 6],
    pub de: [f64; 6],
    /// Commanded task wrench.
    pub u: [f64; 6],
    /// Commanded joint torque.
    pub tau: Vec<f64>,
    pub s: [f64; 6],
    pub l: [f64; 6],
    pub kappa1: [f64; 6],
    pub kappa2: [f64; 6],
    pub nu: [f64; 6],
    /// Twist handed to the controller (observer or EMA).
    pub twist_hat: [f64; 6],
    /// True end-effector twist `(ṗ, ω)`.
    pub twist_true: [f64; 6],
    /// Observer pose estimate `(p̂, ξ̂)`.
    pub g1_hat: [f64; 7],
    /// Observer twist estimate, whether or not it was selected.
    pub g2_hat: [f64; 6],
    pub z_hat: [f64; 6],
    /// Bit `k` set when pose channel `k` came from the observer.
    pub obs_pos_mask: u8,
    /// Velocity came from the observer.
    pub obs_vel: bool,
    pub dist_active: bool,
    /// Orientation error exceeded the near-identity bound.
    pub a1_violation: bool,
}

/// Metadata stored in the header comment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub controller: String,
    pub dof: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub meta: RunMeta,
    pub ticks: Vec<Tick>,
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

/// Column names for a chain with `dof` joints.
pub fn columns(dof: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    c.extend(names("q", dof));
    c.extend(names("dq", dof));
    c.extend(["px", "py", "pz", "xi_eta", "xi_x", "xi_y", "xi_z"].map(String::from));
    c.extend(["pd_x", "pd_y", "pd_z", "xid_eta", "xid_x", "xid_y", "xid_z"].map(String::from));
    c.extend(names("e", 6));
    c.extend(names("de", 6));
    c.extend(names("u", 6));
    c.extend(names("tau", dof));
    c.extend(names("s", 6));
    c.extend(names("L", 6));
    c.extend(names("kappa1_", 6));
    c.extend(names("kappa2_", 6));
    c.extend(names("nu", 6));
    c.extend(names("twist_hat", 6));
    c.extend(names("twist_true", 6));
    c.extend(["g1_px", "g1_py", "g1_pz", "g1_eta", "g1_x", "g1_y", "g1_z"].map(String::from));
    c.extend(names("g2_hat", 6));
    c.extend(names("z_hat", 6));
    c.extend(["obs_pos_mask", "obs_vel", "dist_active", "a1_violation"].map(String::from));
    c
}

impl Tick {
    fn record(&self) -> Vec<String> {
        let f = |x: &f64| format!("{x:?}");
        let mut r = vec![f(&self.t)];
        for v in [
            &self.q[..],
            &self.dq[..],
            &self.p,
            &self.xi,
            &self.p_d,
            &self.xi_d,
            &self.e,
            &self.de,
            &self.u,
            &self.tau[..],
        ] {
            r.extend(v.iter().map(f));
        }
        for v in [&self.s, &self.l, &self.kappa1, &self.kappa2, &self.nu, &self.twist_hat, &self.twist_true] {
            r.extend(v.iter().map(f));
        }
        for v in [&self.g1_hat[..], &self.g2_hat, &self.z_hat] {
            r.extend(v.iter().map(f));
        }
        r.push(self.obs_pos_mask.to_string());
        r.push((self.obs_vel as u8).to_string());
        r.push((self.dist_active as u8).to_string());
        r.push((self.a1_violation as u8).to_string());
        r
    }

    fn parse(rec: &csv::StringRecord, dof: usize) -> Result<Tick> {
        let mut it = rec.iter();
        let mut next = || -> Result<&str> { it.next().ok_or_else(|| Error::Parse("short run-log row".into())) };
        fn num(s: &str) -> Result<f64> {
            s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))
        }
        let mut vecn = |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| num(next()?)).collect() };
        let arr = |v: Vec<f64>| -> [f64; 6] { v.try_into().expect("length checked") };
        let t = vecn(1)?[0];
        let q = vecn(dof)?;
        let dq = vecn(dof)?;
        let p = vecn(3)?;
        let xi = vecn(4)?;
        let p_d = vecn(3)?;
        let xi_d = vecn(4)?;
        let e = arr(vecn(6)?);
        let de = arr(vecn(6)?);
        let u = arr(vecn(6)?);
        let tau = vecn(dof)?;
        let s = arr(vecn(6)?);
        let l = arr(vecn(6)?);
        let kappa1 = arr(vecn(6)?);
        let kappa2 = arr(vecn(6)?);
        let nu = arr(vecn(6)?);
        let twist_hat = arr(vecn(6)?);
        let twist_true = arr(vecn(6)?);
        let g1_hat: [f64; 7] = vecn(7)?.try_into().expect("length checked");
        let g2_hat = arr(vecn(6)?);
        let z_hat = arr(vecn(6)?);
        let rest: Vec<f64> = vecn(4)?;
        Ok(Tick {
            t,
            q,
            dq,
            p: [p[0], p[1], p[2]],
            xi: [xi[0], xi[1], xi[2], xi[3]],
            p_d: [p_d[0], p_d[1], p_d[2]],
            xi_d: [xi_d[0], xi_d[1], xi_d[2], xi_d[3]],
            e,
            de,
            u,
            tau,
            s,
            l,
            kappa1,
            kappa2,
            nu,
            twist_hat,
            twist_true,
            g1_hat,
            g2_hat,
            z_hat,
            obs_pos_mask: rest[0] as u8,
            obs_vel: rest[1] != 0.0,
            dist_active: rest[2] != 0.0,
            a1_violation: rest[3] != 0.0,
        })
    }
}

impl RunLog {
    pub fn new(meta: RunMeta) -> Self {
        Self { meta, ticks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    /// Ticks with `t0 ≤ t < t1`.
    pub fn window(&self, t0: f64, t1: f64) -> RunLog {
        RunLog {
            meta: self.meta.clone(),
            ticks: self.ticks.iter().filter(|k| k.t >= t0 && k.t < t1).cloned().collect(),
        }
    }

    pub fn header_line(&self) -> String {
        let m = &self.meta;
        format!("# {RUNLOG_SCHEMA} controller={} dof={} dt={} seed={}", m.controller, m.dof, m.dt, m.seed)
    }

    /// Write the header comment, column names and `ticks`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header_line())?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(columns(self.meta.dof))?;
        for k in &self.ticks {
            if k.q.len() != self.meta.dof || k.tau.len() != self.meta.dof {
                return Err(Error::Parse(format!("tick at t={} has wrong joint count", k.t)));
            }
            wr.write_record(k.record())?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: BufRead>(mut r: R) -> Result<RunLog> {
        let mut first = String::new();
        r.read_line(&mut first)?;
        let meta = parse_header(first.trim_end())?;
        let mut rd = csv::Reader::from_reader(r);
        let hdr = rd.headers()?.clone();
        let want = columns(meta.dof);
        if hdr.len() != want.len() || hdr.iter().zip(&want).any(|(a, b)| a != b) {
            return Err(Error::Parse("run-log columns do not match the schema".into()));
        }
        let mut ticks = Vec::new();
        for rec in rd.records() {
            ticks.push(Tick::parse(&rec?, meta.dof)?);
        }
        Ok(RunLog { meta, ticks })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<RunLog> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

fn parse_header(line: &str) -> Result<RunMeta> {
    let body = line
        .strip_prefix("# ")
        .and_then(|s| s.strip_prefix(RUNLOG_SCHEMA))
        .ok_or_else(|| Error::Parse(format!("missing run-log header {RUNLOG_SCHEMA:?}")))?;
    let kv: BTreeMap<&str, &str> = body.split_whitespace().filter_map(|t| t.split_once('=')).collect();
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Parse(format!("header lacks {k}")));
    let bad = |k: &str| Error::Parse(format!("bad header field {k}"));
    Ok(RunMeta {
        controller: get("controller")?.to_string(),
        dof: get("dof")?.parse().map_err(|_| bad("dof"))?,
        dt: get("dt")?.parse().map_err(|_| bad("dt"))?,
        seed: get("seed")?.parse().map_err(|_| bad("seed"))?,
    })
}

fn nonempty(log: &RunLog, min: usize) -> Result<()> {
    if log.ticks.len() < min {
        Err(Error::EmptyLog)
    } else {
        Ok(())
    }
}

/// Mean over the three axes of the per-axis position RMSE.
pub fn rmse_p(log: &RunLog) -> Result<f64> {
    nonempty(log, 1)?;
    let n = log.ticks.len() as f64;
    let mut acc = [0.0; 3];
    for k in &log.ticks {
        for (a, (p, d)) in acc.iter_mut().zip(k.p.iter().zip(&k.p_d)) {
            *a += (p - d).powi(2);
        }
    }
    Ok(acc.iter().map(|a| (a / n).sqrt()).sum::<f64>() / 3.0)
}

/// `√(4/N Σ arccos²|ξ·ξ_d|)`, the RMS geodesic angle.
pub fn rmse_xi(log: &RunLog) -> Result<f64> {
    nonempty(log, 1)?;
    let n = log.ticks.len() as f64;
    let sum: f64 = log
        .ticks
        .iter()
        .map(|k| {
            let d: f64 = k.xi.iter().zip(&k.xi_d).map(|(a, b)| a * b).sum();
            d.abs().min(1.0).acos().powi(2)
        })
        .sum();
    Ok((4.0 * sum / n).sqrt())
}

/// Z-Y-X Euler angles `(roll x, pitch y, yaw z)` of `(η, εx, εy, εz)`,
/// so that `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn euler_zyx(xi: &[f64; 4]) -> [f64; 3] {
    let [w, x, y, z] = *xi;
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    [roll, pitch, yaw]
}

fn wrap_pi(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        r
    }
}

/// Per-axis Euler-angle RMSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerRmse {
    /// `(x, y, z)` axis RMSE in radians.
    pub rmse: [f64; 3],
    /// Some sample came within 1e-3 rad of pitch ±π/2.
    pub gimbal_warning: bool,
}

/// Gimbal proximity threshold on the pitch angle.
pub const GIMBAL_BAND: f64 = 1e-3;

/// RMSE of the Z-Y-X Euler angle differences; each difference is taken on
/// the circle, which equals the unwrapped difference while errors stay
/// below π.
pub fn rmse_phi(log: &RunLog) -> Result<EulerRmse> {
    nonempty(log, 1)?;
    let n = log.ticks.len() as f64;
    let mut acc = [0.0; 3];
    let mut gimbal = false;
    for k in &log.ticks {
        let a = euler_zyx(&k.xi);
        let d = euler_zyx(&k.xi_d);
        for ax in [&a, &d] {
            gimbal |= (ax[1].abs() - std::f64::consts::FRAC_PI_2).abs() < GIMBAL_BAND;
        }
        for i in 0..3 {
            acc[i] += wrap_pi(a[i] - d[i]).powi(2);
        }
    }
    Ok(EulerRmse { rmse: acc.map(|a| (a / n).sqrt()), gimbal_warning: gimbal })
}

/// Mean over ticks of the mean absolute joint torque.
pub fn tau_avg(log: &RunLog) -> Result<f64> {
    nonempty(log, 1)?;
    let s: f64 = log.ticks.iter().map(|k| k.tau.iter().map(|x| x.abs()).sum::<f64>() / k.tau.len().max(1) as f64).sum();
    Ok(s / log.ticks.len() as f64)
}

/// Total variation `Σⱼ Σᵢ |τⱼ,ᵢ₊₁ − τⱼ,ᵢ|`.
pub fn tv_tau(log: &RunLog) -> Result<f64> {
    nonempty(log, 2)?;
    Ok(log.ticks.windows(2).map(|w| w[1].tau.iter().zip(&w[0].tau).map(|(a, b)| (a - b).abs()).sum::<f64>()).sum())
}

/// All metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub controller: String,
    pub ticks: usize,
    /// Metric window `[t0, t1]` actually covered.
    pub t0: f64,
    pub t1: f64,
    pub rmse_p: f64,
    pub rmse_xi: f64,
    pub rmse_phi: [f64; 3],
    pub tau_avg: f64,
    pub tv_tau: f64,
    pub gimbal_warning: bool,
}

pub fn evaluate(log: &RunLog) -> Result<MetricsReport> {
    nonempty(log, 2)?;
    let phi = rmse_phi(log)?;
    Ok(MetricsReport {
        controller: log.meta.controller.clone(),
        ticks: log.ticks.len(),
        t0: log.ticks[0].t,
        t1: log.ticks[log.ticks.len() - 1].t,
        rmse_p: rmse_p(log)?,
        rmse_xi: rmse_xi(log)?,
        rmse_phi: phi.rmse,
        tau_avg: tau_avg(log)?,
        tv_tau: tv_tau(log)?,
        gimbal_warning: phi.gimbal_warning,
    })
}

/// Plain-text table with one row per controller and one column per metric.
pub fn render_table(rows: &[MetricsReport]) -> String {
    let mut out = String::new();
    let hdr = [
        "Controller",
        "RMSE_p [m]",
        "RMSE_xi [rad]",
        "RMSE_phi_x",
        "RMSE_phi_y",
        "RMSE_phi_z",
        "tau_avg [Nm]",
        "TV_tau [Nm]",
    ];
    out.push_str(&format!(
        "{:<20} {:>12} {:>13} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
        hdr[0], hdr[1], hdr[2], hdr[3], hdr[4], hdr[5], hdr[6], hdr[7]
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<20} {:>12.3e} {:>13.3e} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e}{}\n",
            r.controller,
            r.rmse_p,
            r.rmse_xi,
            r.rmse_phi[0],
            r.rmse_phi[1],
            r.rmse_phi[2],
            r.tau_avg,
            r.tv_tau,
            if r.gimbal_warning { "  (gimbal)" } else { "" }
        ));
    }
    out
}

/// Convenience for tests and tools: orientation of a tick as a quaternion.
pub fn tick_quat(k: &Tick) -> UnitQuat {
    UnitQuat::new(k.xi[0], crate::Vector3::new(k.xi[1], k.xi[2], k.xi[3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vector3;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn tick(t: f64, p: [f64; 3], pd: [f64; 3], xi: UnitQuat, xid: UnitQuat, tau: Vec<f64>) -> Tick {
        Tick {
            t,
            q: vec![0.0; tau.len()],
            dq: vec![0.0; tau.len()],
            p,
            p_d: pd,
            xi: xi.to_array(),
            xi_d: xid.to_array(),
            tau,
            ..Default::default()
        }
    }

    fn log_of(ticks: Vec<Tick>) -> RunLog {
        let dof = ticks.first().map_or(0, |k| k.tau.len());
        RunLog { meta: RunMeta { controller: "x".into(), dof, dt: 1e-3, seed: 0 }, ticks }
    }

    fn quat_about(axis: Vector3, ang: f64) -> UnitQuat {
        UnitQuat::from_axis_angle(&axis, ang)
    }

    #[test]
    fn empty_log_errors() {
        let l = log_of(vec![]);
        assert!(matches!(rmse_p(&l), Err(Error::EmptyLog)));
        assert!(matches!(tv_tau(&l), Err(Error::EmptyLog)));
    }

    #[test]
    fn perfect_tracking_is_zero() {
        let id = UnitQuat::identity();
        let l = log_of((0..10).map(|i| tick(i as f64, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], id, id, vec![1.0])).collect());
        assert_eq!(rmse_p(&l).unwrap(), 0.0);
        assert_eq!(rmse_xi(&l).unwrap(), 0.0);
        assert_eq!(rmse_phi(&l).unwrap().rmse, [0.0; 3]);
        assert_eq!(tv_tau(&l).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_gives_offset() {
        let id = UnitQuat::identity();
        let l = log_of((0..7).map(|i| tick(i as f64, [0.3, 0.3, 0.3], [0.0; 3], id, id, vec![0.0])).collect());
        assert_relative_eq!(rmse_p(&l).unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn geodesic_error_closed_form_and_double_cover() {
        let ang = 10f64.to_radians();
        let xd = quat_about(Vector3::new(1.0, 2.0, -0.5), 0.7);
        let x = quat_mul_left(quat_about(Vector3::x(), ang), xd);
        let l = log_of((0..5).map(|i| tick(i as f64, [0.0; 3], [0.0; 3], x, xd, vec![0.0])).collect());
        assert_relative_eq!(rmse_xi(&l).unwrap(), ang, epsilon = 1e-9);
        let flipped = log_of((0..5).map(|i| tick(i as f64, [0.0; 3], [0.0; 3], -xd, xd, vec![0.0])).collect());
        assert!(rmse_xi(&flipped).unwrap() < 1e-7);
    }

    fn quat_mul_left(a: UnitQuat, b: UnitQuat) -> UnitQuat {
        crate::rotation::quat_mul(&a, &b)
    }

    #[test]
    fn euler_axis_offset() {
        let xd = quat_about(Vector3::new(0.2, 0.1, 1.0), 0.4);
        let x = quat_mul_left(quat_about(Vector3::z(), 0.1), xd);
        let l = log_of(vec![tick(0.0, [0.0; 3], [0.0; 3], x, xd, vec![0.0])]);
        let r = rmse_phi(&l).unwrap();
        assert!(!r.gimbal_warning);
        // a world-z premultiplication only shifts yaw in Z-Y-X angles
        assert_relative_eq!(r.rmse[2], 0.1, epsilon = 1e-12);
        assert!(r.rmse[0] < 1e-12 && r.rmse[1] < 1e-12);
    }

    #[test]
    fn euler_matches_rotation_matrix() {
        let x = quat_about(Vector3::new(0.3, -0.7, 0.2), 1.1);
        let [r, p, y] = euler_zyx(&x.to_array());
        let m = nalgebra::Rotation3::from_euler_angles(r, p, y).into_inner();
        assert!((m - x.to_rotation_matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn euler_wraps_across_pi() {
        let xd = quat_about(Vector3::x(), std::f64::consts::PI - 0.01);
        let x = quat_about(Vector3::x(), -std::f64::consts::PI + 0.01);
        let l = log_of(vec![tick(0.0, [0.0; 3], [0.0; 3], x, xd, vec![0.0])]);
        assert_relative_eq!(rmse_phi(&l).unwrap().rmse[0], 0.02, epsilon = 1e-9);
    }

    #[test]
    fn gimbal_flag() {
        let x = quat_about(Vector3::y(), std::f64::consts::FRAC_PI_2);
        let l = log_of(vec![tick(0.0, [0.0; 3], [0.0; 3], x, x, vec![0.0])]);
        assert!(rmse_phi(&l).unwrap().gimbal_warning);
    }

    #[test]
    fn tv_single_step_and_sine() {
        let id = UnitQuat::identity();
        let l = log_of(
            (0..10)
                .map(|i| tick(i as f64, [0.0; 3], [0.0; 3], id, id, vec![0.0, if i >= 5 { 2.5 } else { 0.0 }]))
                .collect(),
        );
        assert_relative_eq!(tv_tau(&l).unwrap(), 2.5);
        let (amp, k, n) = (3.0, 4.0, 40_000);
        let l = log_of(
            (0..=n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    tick(t, [0.0; 3], [0.0; 3], id, id, vec![amp * (std::f64::consts::TAU * k * t).sin()])
                })
                .collect(),
        );
        assert_relative_eq!(tv_tau(&l).unwrap(), 4.0 * amp * k, epsilon = 1e-6);
    }

    #[test]
    fn tau_avg_is_mean_abs() {
        let id = UnitQuat::identity();
        let l = log_of(vec![
            tick(0.0, [0.0; 3], [0.0; 3], id, id, vec![1.0, -3.0]),
            tick(1.0, [0.0; 3], [0.0; 3], id, id, vec![2.0, 0.0]),
        ]);
        assert_relative_eq!(tau_avg(&l).unwrap(), 1.5);
    }

    fn random_log(seed: u64, n: usize, dof: usize) -> RunLog {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut r = |s: f64| rng.random_range(-s..s);
        let ticks = (0..n)
            .map(|i| {
                let mut q = |s| Vector3::new(r(s), r(s), r(s));
                let x = quat_about(q(1.0) + Vector3::new(0.0, 0.0, 1e-3), 0.6);
                let xd = quat_about(q(1.0) + Vector3::new(1e-3, 0.0, 0.0), 0.5);
                let p = q(0.5);
                let pd = q(0.5);
                let tau = (0..dof).map(|j| (i * dof + j) as f64 * 0.01 % 1.3 - 0.6).collect();
                let mut k = tick(i as f64 * 1e-3, p.into(), pd.into(), x, xd, tau);
                k.s = [0.1, -0.2, 0.3, 1e-17, 5e300, -0.0];
                k.obs_pos_mask = (i % 64) as u8;
                k.obs_vel = i % 3 == 0;
                k.dist_active = i % 5 == 0;
                k
            })
            .collect();
        RunLog { meta: RunMeta { controller: "rand".into(), dof, dt: 1e-3, seed }, ticks }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let l = random_log(1, 50, 7);
        let s = l.to_csv_string().unwrap();
        assert!(s.starts_with("# ntstsm-runlog v1 controller=rand dof=7"));
        let back = RunLog::read_csv(s.as_bytes()).unwrap();
        assert_eq!(back, l);
        assert_eq!(back.to_csv_string().unwrap(), s);
    }

    #[test]
    fn csv_rejects_foreign_files() {
        assert!(RunLog::read_csv("t,q0\n0,0\n".as_bytes()).is_err());
        let s = random_log(2, 3, 2).to_csv_string().unwrap().replace(",tau0,", ",torque0,");
        assert!(RunLog::read_csv(s.as_bytes()).is_err());
    }

    #[test]
    fn table_has_one_row_per_report() {
        let r = evaluate(&random_log(3, 20, 3)).unwrap();
        let t = render_table(&[r.clone(), r]);
        assert_eq!(t.lines().count(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn metrics_match_naive_loops(seed in 0u64..1000, n in 2usize..60) {
            let l = random_log(seed, n, 4);
            // naive oracle
            let per: [f64; 3] = std::array::from_fn(|a| {
                let mut s = 0.0;
                for k in &l.ticks { s += (k.p[a] - k.p_d[a]) * (k.p[a] - k.p_d[a]); }
                (s / n as f64).sqrt()
            });
            prop_assert!((rmse_p(&l).unwrap() - (per[0] + per[1] + per[2]) / 3.0).abs() < 1e-12);
            let mut e = [0.0f64; 3];
            for k in &l.ticks {
                let (a, d) = (euler_zyx(&k.xi), euler_zyx(&k.xi_d));
                for i in 0..3 { e[i] += wrap_pi(a[i] - d[i]).powi(2); }
            }
            let r = rmse_phi(&l).unwrap().rmse;
            for i in 0..3 { prop_assert!((r[i] - (e[i] / n as f64).sqrt()).abs() < 1e-12); }
            prop_assert!(rmse_xi(&l).unwrap() >= 0.0);
            prop_assert!(tau_avg(&l).unwrap() >= 0.0);
        }

        #[test]
        fn rmse_xi_sign_invariant(seed in 0u64..1000, mask in prop::collection::vec(prop::bool::ANY, 10)) {
            let l = random_log(seed, 10, 1);
            let mut f = l.clone();
            for (k, &m) in f.ticks.iter_mut().zip(&mask) {
                if m { k.xi = k.xi.map(|v| -v); } else { k.xi_d = k.xi_d.map(|v| -v); }
            }
            prop_assert!((rmse_xi(&l).unwrap() - rmse_xi(&f).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn tv_splits_at_junction(seed in 0u64..1000, n in 4usize..50, cut in 2usize..40) {
            prop_assume!(cut + 2 <= n);
            let l = random_log(seed, n, 3);
            let (a, b) = (log_of(l.ticks[..cut].to_vec()), log_of(l.ticks[cut..].to_vec()));
            let junction: f64 = l.ticks[cut].tau.iter().zip(&l.ticks[cut - 1].tau).map(|(x, y)| (x - y).abs()).sum();
            let whole = tv_tau(&l).unwrap();
            prop_assert!((whole - (tv_tau(&a).unwrap() + tv_tau(&b).unwrap() + junction)).abs() < 1e-9);
        }

        #[test]
        fn joint_permutation_invariance(seed in 0u64..1000) {
            let l = random_log(seed, 12, 4);
            let mut p = l.clone();
            for k in &mut p.ticks { k.tau.reverse(); }
            prop_assert!((tv_tau(&l).unwrap() - tv_tau(&p).unwrap()).abs() < 1e-12);
            prop_assert!((tau_avg(&l).unwrap() - tau_avg(&p).unwrap()).abs() < 1e-12);
        }
    }
}
