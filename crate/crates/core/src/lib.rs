//! Simulation and analysis of a frequency-entangling gate built from a quantum dot
//! in a waveguide: two-photon scattering, Schmidt analysis, biexciton decay
//! dynamics and propagation-mode optimization.

pub mod cli;
pub mod coupling;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod modeopt;
pub mod scattering;
pub mod spectral;

pub use error::{Error, Result};
