use super::config::{ExperimentConfig, NoiseKind, NoiseModel};
use crate::control::{tracking_error, Controller};
use crate::metrics::{evaluate, MetricsReport, RunLog, RunMeta, Tick};
use crate::observer::{observer_step, select_outputs, ObserverState};
use crate::par::Execution;
use crate::rigidbody::{
    forward_kinematics, step_with, task_space_dynamics, ChainModel, Damping, FrictionModel, JointState, StepOptions,
    TaskDynamics,
};
use crate::rotation::{axis_to_quat, quat_mul, Pose};
use crate::trajgen::{assumption1_violated, Trajectory};
use crate::{DVector, Error, Result, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Ticks kept for the divergence diagnostic.
pub const TAIL_TICKS: usize = 100;

fn draw(kind: NoiseKind, eps: f64, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if eps <= 0.0 {
        return 0.0;
    }
    match kind {
        NoiseKind::Uniform => rng.random_range(-eps..=eps),
        NoiseKind::Gaussian => {
            if sigma <= 0.0 {
                return 0.0;
            }
            let n = Normal::new(0.0, sigma).expect("sigma checked positive");
            n.sample(rng).clamp(-eps, eps)
        }
    }
}

/// Noisy pose measurement: bounded additive noise on position, a bounded
/// rotation-vector perturbation on orientation.
pub fn inject_noise(x: &Pose, model: &NoiseModel, rng: &mut ChaCha8Rng) -> Pose {
    if model.eps_c <= 0.0 {
        return *x;
    }
    let mut n = [0.0; 6];
    for (i, v) in n.iter_mut().enumerate() {
        *v = draw(model.kind, model.eps_c, model.sigma[i], rng);
    }
    let dp = Vector3::new(n[0], n[1], n[2]);
    let dr = Vector3::new(n[3], n[4], n[5]);
    Pose::new(x.p + dp, quat_mul(&axis_to_quat(&dr), &x.xi).canonical())
}

fn to6(v: &DVector) -> Vector6 {
    Vector6::from_iterator(v.iter().copied())
}

fn arr3(v: &Vector3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn arr6(v: &Vector6) -> [f64; 6] {
    let mut a = [0.0; 6];
    a.copy_from_slice(v.as_slice());
    a
}

/// Resolved pieces of a config, ready to simulate.
pub struct Setup {
    pub model: ChainModel,
    pub friction: FrictionModel,
    pub traj: Trajectory,
    pub q0: DVector,
    pub duration: f64,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let model = cfg.load_chain()?;
    let n = model.dof();
    let friction = cfg.friction.resolve(n)?;
    let q_start = match &cfg.initial_q {
        Some(q) if q.len() == n => DVector::from_column_slice(q),
        Some(q) => return Err(Error::Config(format!("initial_q has {} entries, chain has {n} joints", q.len()))),
        None => model.home_configuration(),
    };
    let traj = Trajectory::from_spec(&cfg.trajectory, &forward_kinematics(&model, &q_start))?;
    let q0 = match &cfg.initial_joint_offset {
        Some(o) if o.len() == n => &q_start + DVector::from_column_slice(o),
        Some(o) => {
            return Err(Error::Config(format!("initial_joint_offset has {} entries, chain has {n} joints", o.len())))
        }
        None => q_start,
    };
    if !model.within_limits(&q0) {
        return Err(Error::Config("initial configuration violates joint limits".into()));
    }
    let duration = cfg.run_duration(traj.duration());
    Ok(Setup { model, friction, traj, q0, duration })
}

fn diverged(t: f64, reason: String, tail: &VecDeque<Tick>, meta: &RunMeta) -> Error {
    let log = RunLog { meta: meta.clone(), ticks: tail.iter().cloned().collect() };
    Error::Diverged { t, reason, tail: log.to_csv_string().unwrap_or_default() }
}

/// Run one closed-loop experiment.
///
/// Per tick: true state and kinematics, noisy measurement, task dynamics,
/// observer selection, trajectory sample, tracking error, controller,
/// torque mapping, disturbance, log, observer prediction, plant step. The
/// torque computed at a tick is applied over the next one, and the observer
/// predicts with the wrench that is actually acting.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunLog> {
    let Setup { model, friction, traj, q0, duration } = prepare(cfg)?;
    let dt = cfg.dt;
    let n_ticks = (duration / dt + 1e-9).floor() as usize;
    let meta = RunMeta { controller: cfg.controller.name(), dof: model.dof(), dt, seed: cfg.seed };
    if n_ticks == 0 {
        return Err(Error::EmptyLog);
    }
    let mut ctrl = Controller::new(cfg.controller, cfg.sliding, cfg.adaptive)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let opts = StepOptions { clamp_limits: cfg.loop_opts.clamp_joint_limits, ..StepOptions::default() };
    let lo = cfg.loop_opts;
    let effort = model.effort_limits();

    let mut state = JointState::at_rest(q0.clone());
    let mut log = RunLog::new(meta.clone());
    log.ticks.reserve(n_ticks);
    let mut tail: VecDeque<Tick> = VecDeque::with_capacity(TAIL_TICKS + 1);
    let mut obs: Option<ObserverState> = None;
    let first = task_space_dynamics(&model, &q0, &state.dq, Damping::Auto)?;
    let mut u_applied = first.gbar;
    let mut tau_applied = first.joint.g.clone();

    for k in 0..n_ticks {
        let t = k as f64 * dt;
        let fail = |reason: String, tail: &VecDeque<Tick>| diverged(t, reason, tail, &meta);
        if !state.is_finite() {
            return Err(fail("non-finite joint state".into(), &tail));
        }
        let pose = forward_kinematics(&model, &state.q);
        let dyn_: TaskDynamics =
            task_space_dynamics(&model, &state.q, &state.dq, Damping::Auto).map_err(|e| fail(e.to_string(), &tail))?;
        let twist_true = to6(&(&dyn_.j * &state.dq));
        let x_meas = inject_noise(&pose, &cfg.noise, &mut rng);
        let st = *obs.get_or_insert_with(|| ObserverState::new(&x_meas));

        let sel = select_outputs(&st, &x_meas, &cfg.observer);
        let (pose_c, twist_c, mask, vel_obs) = if lo.use_observer {
            let mask = sel.pos_from_observer.iter().enumerate().fold(0u8, |m, (i, b)| m | ((*b as u8) << i));
            (sel.pose, sel.twist, mask, sel.vel_from_observer.iter().all(|b| *b))
        } else {
            (x_meas, st.ema_vel, 0, false)
        };

        let sample = traj.sample(t, dt);
        let (err, h) = tracking_error(&pose_c, &twist_c, &sample).map_err(|e| fail(e.to_string(), &tail))?;
        let out = ctrl.step(&err, &h, &dyn_, &sample, dt);
        if out.u.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite control wrench".into(), &tail));
        }
        let damp = state.dq.map(|v| -lo.null_space_damping * v);
        let mut tau_cmd = dyn_.joint_torque(&out.u) + dyn_.null_space_projection(&(&dyn_.joint.g + damp));
        if lo.saturate_torque {
            for (t, lim) in tau_cmd.iter_mut().zip(effort.iter()) {
                *t = t.clamp(-lim, *lim);
            }
        }

        let mut f_e = Vector6::zeros();
        let mut active = false;
        for d in cfg.disturbances.iter().filter(|d| d.active(t)) {
            f_e += Vector6::from(d.wrench);
            active = true;
        }
        let tau_ext = dyn_.joint_torque(&f_e);

        // logged errors are on the true state
        let (true_err, a1) = match tracking_error(&pose, &twist_true, &sample) {
            Ok((e, _)) => (e, assumption1_violated(&sample.xi_d, &pose.xi, lo.eps_bar)),
            Err(e) => return Err(fail(e.to_string(), &tail)),
        };
        let s = &ctrl.state;
        let tick = Tick {
            t,
            q: state.q.iter().copied().collect(),
            dq: state.dq.iter().copied().collect(),
            p: arr3(&pose.p),
            xi: pose.xi.to_array(),
            p_d: arr3(&sample.p_d),
            xi_d: sample.xi_d.to_array(),
            e: arr6(&true_err.e),
            de: arr6(&true_err.de),
            u: arr6(&out.u),
            tau: tau_cmd.iter().copied().collect(),
            s: arr6(&out.s),
            l: if ctrl.spec.is_sliding() { arr6(&s.l) } else { [0.0; 6] },
            kappa1: if ctrl.spec.is_sliding() { arr6(&s.kappa1) } else { [0.0; 6] },
            kappa2: if ctrl.spec.is_sliding() { arr6(&s.kappa2) } else { [0.0; 6] },
            nu: arr6(&s.nu),
            twist_hat: arr6(&twist_c),
            twist_true: arr6(&twist_true),
            g1_hat: [
                st.p_hat.x,
                st.p_hat.y,
                st.p_hat.z,
                st.xi_hat.eta,
                st.xi_hat.eps.x,
                st.xi_hat.eps.y,
                st.xi_hat.eps.z,
            ],
            g2_hat: arr6(&st.g2_hat),
            z_hat: arr6(&st.z_hat),
            obs_pos_mask: mask,
            obs_vel: vel_obs,
            dist_active: active,
            a1_violation: a1,
        };
        if tail.len() == TAIL_TICKS {
            tail.pop_front();
        }
        tail.push_back(tick.clone());
        log.ticks.push(tick);

        let next_obs = observer_step(&st, &cfg.observer, &x_meas, &u_applied, &dyn_, dt)
            .map_err(|e| fail(e.to_string(), &tail))?;
        obs = Some(next_obs);
        state = step_with(&model, &friction, &state, &tau_applied, &tau_ext, dt, opts, Some(&dyn_.joint))
            .map_err(|e| fail(e.to_string(), &tail))?;
        u_applied = out.u;
        tau_applied = tau_cmd;
    }
    Ok(log)
}

/// Outcome of one row of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub controller: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run several configs (in parallel when enabled) and evaluate each over
/// the optional `[t0, t1)` window. Failures are reported per row.
pub fn compare(cfgs: &[ExperimentConfig], window: Option<(f64, f64)>, exec: Execution) -> Vec<CompareRow> {
    exec.map(cfgs, |c| {
        let res = run_experiment(c).and_then(|log| match window {
            Some((a, b)) => evaluate(&log.window(a, b)),
            None => evaluate(&log),
        });
        let (metrics, error) = match res {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        };
        CompareRow { name: c.name.clone(), controller: c.controller.name(), metrics, error }
    })
}

/// Seed for run `index` derived from a master seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bounds observed over a window of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub t0: f64,
    pub t1: f64,
    /// `max |sᵢ|` over ticks and channels.
    pub s_max: f64,
    /// `max |eᵢ|`.
    pub e_max: f64,
    /// `max |ėᵢ|`.
    pub de_max: f64,
    /// Fraction of ticks on which every pose and velocity channel came from
    /// the observer.
    pub observer_fraction: f64,
    /// `max |ĝ₂ − ẋ|` (twist estimate error).
    pub twist_err_max: f64,
}

pub fn window_stats(log: &RunLog, t0: f64, t1: f64) -> Result<WindowStats> {
    let w = log.window(t0, t1);
    if w.is_empty() {
        return Err(Error::EmptyLog);
    }
    let amax = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, v| m.max(v.abs()));
    let s_max = amax(&mut w.ticks.iter().flat_map(|k| k.s));
    let e_max = amax(&mut w.ticks.iter().flat_map(|k| k.e));
    let de_max = amax(&mut w.ticks.iter().flat_map(|k| k.de));
    let twist_err_max = amax(&mut w.ticks.iter().flat_map(|k| (0..6).map(move |i| k.twist_hat[i] - k.twist_true[i])));
    let on = w.ticks.iter().filter(|k| k.obs_pos_mask == 0b11_1111 && k.obs_vel).count();
    Ok(WindowStats { t0, t1, s_max, e_max, de_max, observer_fraction: on as f64 / w.len() as f64, twist_err_max })
}

/// First time from which `max |sᵢ| ≤ bound` holds on every remaining tick
/// of `[t_from, t_to)`; `None` if it never settles.
pub fn reaching_time(log: &RunLog, bound: f64, t_from: f64, t_to: f64) -> Option<f64> {
    let w = log.window(t_from, t_to);
    let mut settled: Option<f64> = None;
    for k in &w.ticks {
        let inside = k.s.iter().all(|s| s.abs() <= bound);
        match (inside, settled) {
            (true, None) => settled = Some(k.t),
            (false, Some(_)) => settled = None,
            _ => {}
        }
    }
    settled.map(|t| t - t_from)
}
