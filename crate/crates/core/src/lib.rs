//! Quantum-jump simulation of heralded entanglement between two cavity-coupled
//! ions whose emission is mixed on a beam splitter (a Hong-Ou-Mandel setup),
//! together with the analytic and density-matrix references used to check it.

pub mod analytic;
pub mod error;
pub mod experiments;
pub mod hilbert;
pub mod lindblad;
pub mod model;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
