//! Multichannel scattering of a single excitation on a tight-binding chain
//! that is side-coupled to a three-site control unit whose monomers may
//! vibrate in harmonic angular traps.
//!
//! The stationary solver lives in [`qsm`]; [`tmm`] and [`tdse`] are the
//! static and time-dependent references it is checked against, and
//! [`spectra`] runs sweeps and derived analyses on top of all three.

// Negated comparisons are used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod error;
pub mod model;
pub mod qsm;
pub mod spectra;
pub mod tdse;
pub mod tmm;

pub use coupling::CouplingTensors;
pub use error::{Error, Result};
pub use model::{channel_set, ChannelSet, ControlUnitGeometry, Monomer, OscillatorSpec, ScatteringProblem};
