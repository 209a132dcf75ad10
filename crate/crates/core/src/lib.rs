//! Cognitive interference alignment for a two-tier OFDMA downlink.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod ofdm;
pub mod precoder;
pub mod seed;

pub use error::{CiaError, Result};
pub use faer::c64;
