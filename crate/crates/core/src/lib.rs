//! Desk-scale simulation and schedule design for adiabatic maximum-independent-set
//! solving with Rydberg atoms on square-lattice unit-disk graphs.
//!
//! The crate covers the whole pipeline: graph construction and
//! independent-set counting, exact detuning bounds for the ground-state
//! encoding, time-dependent Schrödinger integration over blockade subspaces,
//! piecewise-linear and counterdiabatic schedule families, per-graph schedule
//! optimization, and hardness-parametrized schedule models that can be
//! exported as hardware-ready waveforms.

pub mod bounds;
pub mod dataset;
pub mod error;
pub mod graphs;
pub mod hamiltonian;
pub mod optimizer;
pub mod schedules;
pub mod evolution;

pub use error::{Error, Result};
