//! Rate-equation and kinetic Monte Carlo simulation of magneto-optical
//! trapping for multilevel atoms and molecules driven by several laser
//! frequencies and polarizations.
//!
//! The crate is organised bottom-up:
//!
//! * [`angular`]: exact Clebsch–Gordan coefficients and dipole line strengths.
//! * [`scheme`]: level schemes (sublevels, g-factors, radiative links) and presets.
//! * [`fields`]: laser beams, polarization decomposition, switching schedules,
//!   magnetic field maps.
//! * [`rates`]: per-beam stimulated rates and spontaneous rates at a phase-space point.
//! * [`steady`]: stationary populations and the scattering force.
//! * [`kmc`]: event-driven Monte Carlo trajectories with photon recoil.
//! * [`sweep`]: force maps over position/velocity grids and trap metrics.
//! * [`config`] and [`output`]: run configuration documents and CSV output
//!   used by the `motsim` binary.

pub mod angular;
pub mod config;
pub mod error;
pub mod fields;
pub mod kmc;
pub mod output;
pub mod presets;
pub mod rates;
pub mod rng;
pub mod scheme;
pub mod setup;
pub mod steady;
pub mod sweep;
pub mod units;

pub use angular::HalfInt;
pub use error::{Error, Result};
pub use fields::{LaserBeam, MagneticFieldMap, Schedule};
pub use scheme::{LevelScheme, SchemePreset};
pub use setup::Setup;
