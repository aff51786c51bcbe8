//! Distributed secondary voltage control for inverter-based AC microgrids.

pub mod control;
pub mod error;
pub mod eskbf;
pub mod graph;
pub mod linearize;
pub mod network;
pub mod plant;
pub mod sim;

pub use error::{ConfigError, Error, GraphError, NumericalError, Result};
