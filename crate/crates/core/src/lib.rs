//! Split-operator simulator for double ionization of a (1+1)-dimensional
//! two-electron atom in few-cycle laser pulses.
//!
//! Both electrons move along field-aligned axes that make a fixed angle with
//! the polarization, which gives the `√3/2` coupling factor and the
//! `(r₁-r₂)² + r₁r₂` repulsion argument. Atomic units throughout.

pub mod config;
pub mod error;
pub mod grid;
pub mod groundstate;
pub mod io;
pub mod momenta;
pub mod potentials;
pub mod propagator;
pub mod pulse;
pub mod rates;
pub mod spectral;
pub mod yields;

pub use error::{Error, Result};
pub use grid::{make_grid, AxisId, Gauge, Grid2D, Representation, Wavefunction};
pub use potentials::SoftCoreParams;
pub use pulse::PulseParams;
