use thiserror::Error;

/// Errors produced by the modem, channel, estimator, and localization layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("pilot guard region out of grid bounds")]
    GuardOutOfBounds,

    #[error("path delay of {delay_taps:.3} taps exceeds cyclic prefix length {cp_len}")]
    DelayExceedsCp { delay_taps: f64, cp_len: usize },

    #[error("Doppler tap {doppler_taps:.3} outside half the Doppler grid span ({limit:.1})")]
    DopplerOutOfRange { doppler_taps: f64, limit: f64 },

    #[error("at least {need} measurements required, got {got}")]
    InsufficientMeasurements { got: usize, need: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
