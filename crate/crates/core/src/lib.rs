//! Independence-based blind source separation with auxiliary-function
//! updates, and maximum-SIR demixing driven by interference covariances.

pub mod algorithms;
pub mod error;
pub mod formats;
pub mod linalg;
pub mod metrics;
pub mod roomsim;
pub mod separation;
pub mod signals;
pub mod stft;
pub mod wav;

pub use error::{Error, Result};
