//! Delay-Doppler sensing library: OTFS modulation, a tap-domain channel
//! simulator, pilot-based fractional delay/Doppler estimation, frame
//! synchronization, and bistatic multi-instant target localization.

pub mod capture;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod fft;
pub mod io;
pub mod locator;
pub mod otfs;
pub mod scene;
pub mod types;

pub use error::{Error, Result};
pub use types::{DDGrid, FrameConfig, PilotConfig, TFGrid, TimeSignal};

pub use num_complex::Complex64;
