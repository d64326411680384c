//! Production-system simulation of metacognitive monitoring and the
//! threshold at which brief interoceptive signals get noticed.
//!
//! The [`engine`] runs a timed cognition cycle over [`memory`] and rules
//! whose utilities and structure change through [`learning`]. The
//! [`mechanisms`] module holds the speed-up toggles, [`signals`] produces and
//! scores the stimuli, [`psychophysics`] turns many trials into a threshold
//! and [`harness`] wires whole experiments.

pub mod engine;
pub mod exec;
pub mod harness;
pub mod learning;
pub mod mechanisms;
pub mod memory;
pub mod psychophysics;
pub mod rng;
pub mod signals;
