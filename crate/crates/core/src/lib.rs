//! Plasticity laboratory: activation functions, a small trainable network,
//! continual task streams, the pre-activation shock protocol and the metric
//! suite used to study loss of plasticity.

pub mod activation;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod props;
pub mod runner;
pub mod seed;
pub mod streams;
pub mod stress;

pub use error::{Error, Result};
