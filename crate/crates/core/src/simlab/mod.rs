//! Closed-loop experiment harness: configuration, presets, noise,
//! disturbance schedule, the tick loop and multi-run comparison.
//!
//! Configs are TOML. A minimal one names a controller and a trajectory:
//!
//! ```toml
//! controller = { kind = "ntstsm" }
//! [trajectory]
//! kind = "waypoints"
//! waypoints = [{ duration = 1.0 }, { offset = { dp = [0.05, 0.0, 0.0] }, duration = 2.0 }]
//! ```

mod config;
mod run;

pub use config::{
    all_controllers, desk_disturbances, desk_trajectory, DisturbanceEvent, ExperimentConfig, FrictionConfig,
    FrictionPreset, LoopOptions, NoiseKind, NoiseModel, Preset, BUILTIN_CHAIN,
};
pub use run::{
    compare, derive_seed, inject_noise, prepare, reaching_time, run_experiment, window_stats, CompareRow, Setup,
    WindowStats, TAIL_TICKS,
};
