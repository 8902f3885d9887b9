//! Predictive-coding variational RNN with online error regression, coupled
//! to a hybrid intermittent compliance controller on a simulated arm.

pub mod encoding;
pub mod error;
pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod control;
pub mod linalg;
pub mod live;
pub mod optim;
pub mod primitives;
pub mod pvrnn;
pub mod regression;
pub mod session;
pub mod trainer;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

/// Rate of the network tick (and of the training data), in Hz.
pub const NETWORK_RATE_HZ: f64 = 4.0;
