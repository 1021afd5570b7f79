//! Planar hydraulic-fracture propagation on a uniform rectangular grid.

pub mod benchmarks;
pub mod cli;
pub mod elastic;
pub mod error;
pub mod front;
pub mod geometry;
pub mod lubrication;
pub mod mesh;
pub mod quadrature;
pub mod stepper;
pub mod tip_asymptotics;

pub use error::{HfError, Result};
