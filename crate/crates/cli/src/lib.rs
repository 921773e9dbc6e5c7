//! Experiment harness for the inertia-core library: configuration, agent
//! and environment wiring, training/evaluation loops with CSV logging,
//! verification-suite dispatch, and SVG plot emission. The `inertia` binary
//! is a thin command layer over this crate.

pub mod config;
pub mod error;
pub mod harness;
pub mod plot;
pub mod run;

pub use error::CliError;
