use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Jacobian is singular: smallest singular value {sigma_min:.3e} below hard floor {floor:.1e}")]
    Singularity { sigma_min: f64, floor: f64 },

    #[error("integration produced a non-finite state: {0}")]
    Integration(String),

    #[error("orientation error too large: |eta~| = {eta:.4} below floor {floor}")]
    OrientationErrorTooLarge { eta: f64, floor: f64 },

    #[error("observer diverged: {0}")]
    ObserverDiverged(String),

    #[error("degenerate stability ellipse: gamma*theta = {0} must exceed 1")]
    DegenerateEllipse(f64),

    #[error("gain query lies outside the stability ellipse (margin {margin:.3e})")]
    NotStable { margin: f64 },

    #[error("run log is empty or too short for this metric")]
    EmptyLog,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation diverged at t = {t:.3} s: {reason}")]
    Diverged {
        t: f64,
        reason: String,
        /// CSV rendering of the last ticks before the failure.
        tail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
