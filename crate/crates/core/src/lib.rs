//! Fraud-user detection on payment platforms with adversarial autoencoders.

pub mod aae;
pub mod cluster;
pub mod error;
pub mod experiments;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};
