//! Three-level Λ atom driven by pulse trains: master-equation integration,
//! repetition-rate sweeps, and detection of fractional resonances.

pub mod cli;
pub mod config;
pub mod dressed;
pub mod drive;
pub mod error;
pub mod integrator;
pub mod io;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod spectra;
pub mod sweep;
