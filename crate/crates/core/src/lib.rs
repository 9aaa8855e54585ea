//! Scan tests for sparse signals in Ising-model data.

pub mod adaptive;
pub mod auxiliary;
pub mod classes;
pub mod detectors;
pub mod error;
pub mod model;
pub mod oracle;
pub mod mean_field;
pub mod risk;
pub mod rng;
pub mod samplers;
pub mod susceptibility;

pub use error::{Error, Result};
pub use model::{Boundary, CouplingGraph, GraphKind, ModelSpec, SignalSpec, SpinConfiguration};
