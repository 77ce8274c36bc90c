//! Adaptive task-space non-singular terminal super-twisting sliding-mode
//! (NT-STSM) control for serial manipulators.
//!
//! The crate is organised bottom-up:
//!
//! * [`rotation`] – unit quaternions, quaternion error and the `H` map.
//! * [`rigidbody`] – kinematics and dynamics of an unbranched revolute chain.
//! * [`trajgen`] – clamped cubic translation and Hermite-blended orientation.
//! * [`observer`] – third-order sliding-mode observer with EMA fallback.
//! * [`control`] – sliding surfaces, NT-STSM law, adaptive gains, baselines.
//! * [`gainlab`] – executable stability-region and bound computations.
//! * [`metrics`] – RMSE / effort / total-variation metrics over run logs.
//! * [`simlab`] – closed-loop experiment harness, configuration and logging.
//!
//! Batch workloads (grid sweeps, randomized checks, multi-run comparisons)
//! go through [`par::Execution`], which uses rayon when the `parallel`
//! feature is enabled and falls back to plain iterators otherwise.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod gainlab;
pub mod metrics;
pub mod observer;
pub mod par;
pub mod rigidbody;
pub mod rotation;
pub mod simlab;
pub mod trajgen;

pub use error::{Error, Result};

/// 6-vector in task space: (translation, rotation).
pub type Vector6 = nalgebra::Vector6<f64>;
/// 6×6 task-space matrix.
pub type Matrix6 = nalgebra::Matrix6<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Matrix3 = nalgebra::Matrix3<f64>;
/// Joint-space vector of dynamic length.
pub type DVector = nalgebra::DVector<f64>;
pub type DMatrix = nalgebra::DMatrix<f64>;
