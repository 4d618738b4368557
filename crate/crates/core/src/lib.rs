//! Simulation and verification laboratory for stationary symmetric
//! alpha-stable random fields.
//!
//! The crate builds fields from kernel descriptors (a nonsingular flow plus
//! a base function per component), simulates them by a tail-compensated
//! series on dyadic lattice windows, and verifies the dissipative/
//! conservative dichotomy through lifetime integrals, normalized partial
//! maxima and Fréchet limit tests.

pub mod action;
pub mod config;
pub mod error;
pub mod experiment;
pub mod hopf;
pub mod kernel;
pub mod lattice;
pub mod lepage;
pub mod maxima;
pub mod quad;
pub mod report;
pub mod rng;
pub mod stable;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
