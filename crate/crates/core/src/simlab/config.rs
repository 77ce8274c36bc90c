use crate::control::{AdaptiveParams, ControllerSpec, SlidingParams};
use crate::observer::ObserverParams;
use crate::rigidbody::{ChainModel, FrictionModel};
use crate::trajgen::{SinusoidSpec, TrajectorySpec, WaypointSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Name of the built-in chain.
pub const BUILTIN_CHAIN: &str = "franka-like";

/// Named friction rows or an explicit per-joint table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrictionConfig {
    Preset(FrictionPreset),
    Custom(FrictionModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrictionPreset {
    Default,
    Simulated,
    None,
}

impl Default for FrictionConfig {
    fn default() -> Self {
        FrictionConfig::Preset(FrictionPreset::Simulated)
    }
}

impl FrictionConfig {
    pub fn resolve(&self, dof: usize) -> Result<FrictionModel> {
        let f = match self {
            FrictionConfig::Preset(FrictionPreset::Default) => FrictionModel::default_row(dof),
            FrictionConfig::Preset(FrictionPreset::Simulated) => FrictionModel::simulated_row(dof),
            FrictionConfig::Preset(FrictionPreset::None) => FrictionModel::none(dof),
            FrictionConfig::Custom(m) => m.clone(),
        };
        f.validate(dof)?;
        Ok(f)
    }
}

/// External wrench `(N, N, N, N·m, N·m, N·m)` applied at the end-effector
/// on `[t_start, t_start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceEvent {
    pub t_start: f64,
    pub duration: f64,
    pub wrench: [f64; 6],
}

impl DisturbanceEvent {
    pub fn active(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Uniform on `[−ε_c, ε_c]`.
    #[default]
    Uniform,
    /// Zero-mean Gaussian with standard deviation `sigma`, clipped to `±ε_c`.
    Gaussian,
}

/// Pose measurement noise. Position channels get additive noise; the
/// orientation is perturbed by a rotation vector drawn the same way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Hard bound per channel.
    pub eps_c: f64,
    /// Per-channel standard deviation (Gaussian only).
    pub sigma: [f64; 6],
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { kind: NoiseKind::Uniform, eps_c: 5e-4, sigma: [2.5e-4; 6] }
    }
}

impl NoiseModel {
    pub fn off() -> Self {
        NoiseModel { eps_c: 0.0, ..Self::default() }
    }
}

/// Closed-loop wiring options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopOptions {
    /// Joint damping applied through the null-space projection (N·m·s/rad).
    pub null_space_damping: f64,
    /// Bound on the orientation-error vector above which the tick is flagged.
    pub eps_bar: f64,
    /// Feed the controller from the observer selector; otherwise raw pose
    /// plus the EMA velocity.
    pub use_observer: bool,
    /// Clip commanded torques to the chain's effort limits.
    pub saturate_torque: bool,
    /// Stop joints at their position limits.
    pub clamp_joint_limits: bool,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            null_space_damping: 2.0,
            eps_bar: 0.5,
            use_observer: true,
            saturate_torque: true,
            clamp_joint_limits: true,
        }
    }
}

fn default_name() -> String {
    "experiment".into()
}
fn default_chain() -> String {
    BUILTIN_CHAIN.into()
}
fn default_dt() -> f64 {
    1e-3
}

/// Everything needed to reproduce one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// `"franka-like"` or a path to a chain TOML/JSON file, relative to the
    /// config file.
    #[serde(default = "default_chain")]
    pub chain: String,
    #[serde(default)]
    pub friction: FrictionConfig,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub sliding: SlidingParams,
    #[serde(default)]
    pub adaptive: AdaptiveParams,
    #[serde(default)]
    pub observer: ObserverParams,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceEvent>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to the trajectory duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Start configuration; defaults to the chain's home configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_q: Option<Vec<f64>>,
    /// Added to the start configuration after the trajectory start pose has
    /// been taken, so the run begins off the trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_joint_offset: Option<Vec<f64>>,
    #[serde(default, rename = "loop")]
    pub loop_opts: LoopOptions,
    /// Directory that relative chain paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)?;
        let mut c = Self::from_toml_str(&s).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn run_duration(&self, traj_duration: f64) -> f64 {
        self.duration.unwrap_or(traj_duration)
    }

    pub fn load_chain(&self) -> Result<ChainModel> {
        if self.chain == BUILTIN_CHAIN {
            return Ok(ChainModel::franka_like());
        }
        let p = Path::new(&self.chain);
        let p = match (&self.base_dir, p.is_relative()) {
            (Some(b), true) => b.join(p),
            _ => p.to_path_buf(),
        };
        ChainModel::load(&p)
    }

    /// Checks that do not need the chain model.
    pub fn validate(&self) -> Result<()> {
        self.sliding.validate()?;
        self.adaptive.validate()?;
        self.observer.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(d) = self.duration {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("duration must be non-negative, got {d}")));
            }
        }
        let n = &self.noise;
        if !(n.eps_c >= 0.0 && n.eps_c.is_finite()) || n.sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("noise bound and sigmas must be non-negative".into()));
        }
        if self.controller.is_sliding() && !(self.adaptive.mu_a > n.eps_c) {
            return Err(Error::Config(format!(
                "boundary layer mu_a = {} must exceed the noise bound eps_c = {}",
                self.adaptive.mu_a, n.eps_c
            )));
        }
        for d in &self.disturbances {
            if !(d.duration > 0.0) || !d.t_start.is_finite() || d.wrench.iter().any(|w| !w.is_finite()) {
                return Err(Error::Config("disturbance events need finite wrenches and positive duration".into()));
            }
        }
        let lo = &self.loop_opts;
        if !(lo.null_space_damping >= 0.0) || !(lo.eps_bar > 0.0) {
            return Err(Error::Config("null-space damping must be ≥ 0 and eps_bar > 0".into()));
        }
        Ok(())
    }
}

/// Built-in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 0.05 m on each axis and 25° about each axis, out and back, with
    /// exact pose measurements.
    Desk,
    /// [`Preset::Desk`] with the four end-effector disturbance pulses.
    DeskDisturbed,
    /// [`Preset::Desk`] with bounded pose noise (`ε_c = 5e-4`).
    DeskNoisy,
    /// Noise-free, friction-free sinusoidal tracking for observer checks.
    Sinusoid,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Desk, Preset::DeskDisturbed, Preset::DeskNoisy, Preset::Sinusoid];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::DeskDisturbed => "desk-disturbed",
            Preset::DeskNoisy => "desk-noisy",
            Preset::Sinusoid => "sinusoid",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown preset {s:?} (known: desk, desk-disturbed, desk-noisy, sinusoid)"))
        })
    }

    pub fn config(self, controller: ControllerSpec) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            name: format!("{}-{}", self.name(), controller.name()),
            chain: default_chain(),
            friction: FrictionConfig::default(),
            controller,
            sliding: SlidingParams::default(),
            adaptive: AdaptiveParams::default(),
            observer: ObserverParams::default(),
            trajectory: desk_trajectory(),
            disturbances: Vec::new(),
            noise: NoiseModel::off(),
            dt: 1e-3,
            duration: None,
            seed: 1,
            initial_q: None,
            initial_joint_offset: None,
            loop_opts: LoopOptions::default(),
            base_dir: None,
        };
        match self {
            Preset::Desk => {}
            Preset::DeskDisturbed => c.disturbances = desk_disturbances(),
            Preset::DeskNoisy => c.noise = NoiseModel::default(),
            Preset::Sinusoid => {
                c.friction = FrictionConfig::Preset(FrictionPreset::None);
                c.trajectory = TrajectorySpec::Sinusoid(SinusoidSpec {
                    amplitude_p: [0.03, 0.03, 0.02],
                    amplitude_rot: [0.1, 0.1, 0.1],
                    frequency_hz: 0.5,
                    duration: 4.0,
                });
            }
        }
        c
    }
}

/// Hold, move to the offset goal, hold, move back, hold: 20 s in total.
pub fn desk_trajectory() -> TrajectorySpec {
    let goal = |d| WaypointSpec::offset([0.05; 3], [25.0; 3], d);
    TrajectorySpec::Waypoints {
        waypoints: vec![
            WaypointSpec::hold(1.0),
            goal(5.0),
            goal(4.0),
            WaypointSpec::hold(5.0),
            WaypointSpec::hold(5.0),
        ],
    }
}

/// Four 1 s end-effector wrench pulses.
pub fn desk_disturbances() -> Vec<DisturbanceEvent> {
    let ev = |t, w| DisturbanceEvent { t_start: t, duration: 1.0, wrench: w };
    vec![
        ev(5.0, [0.0, 5.0, 0.0, 0.0, 0.0, 0.0]),
        ev(10.0, [5.0, 0.0, -5.0, 0.0, 0.0, 0.0]),
        ev(14.0, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        ev(17.0, [0.0, -5.0, 5.0, 0.0, -1.0, 1.0]),
    ]
}

/// Every controller compared in the benchmark tables.
pub fn all_controllers() -> Vec<ControllerSpec> {
    vec![
        ControllerSpec::PdLow,
        ControllerSpec::PdMed,
        ControllerSpec::PdHigh,
        ControllerSpec::Ntsm,
        ControllerSpec::Stsm,
        ControllerSpec::Ntstsm,
        ControllerSpec::NtstsmConstrained,
    ]
}
