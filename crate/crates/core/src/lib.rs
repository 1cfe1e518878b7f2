//! Slow-variable discovery and stationary-distribution estimation for
//! multiscale stochastic reaction networks.

pub mod admgraph;
pub mod artifacts;
pub mod binning;
pub mod conditional;
pub mod config;
pub mod covariance;
pub mod error;
pub mod evaluate;
pub mod linalg;
pub mod network;
pub mod pipeline;
pub mod simulate;
pub mod slowchain;
pub mod spectral;
pub mod stages;

pub use error::{Error, Result};
