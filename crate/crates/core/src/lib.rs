//! Workbench for membership inference attacks on simulated wireless signal
//! classifiers, and the score-perturbation defense against them.
//!
//! The crate is organized around the experiment pipeline:
//!
//! - [`signal`] synthesizes devices, channels, and paired provider/adversary
//!   observations for every scenario.
//! - [`nn`] is a from-scratch feedforward network (backprop + Adam) that also
//!   exposes gradients with respect to its inputs.
//! - [`classifiers`] builds the provider's target classifier and the
//!   adversary's surrogate.
//! - [`mia`] trains and evaluates membership inference models, including the
//!   noisy-variation protocol.
//! - [`defense`] implements the shadow-model score perturbation with argmax
//!   preservation and non-argmax shuffling.
//! - [`experiment`] orchestrates the named experiments end to end and writes
//!   deterministic reports.

pub mod classifiers;
pub mod defense;
pub mod error;
pub mod experiment;
pub mod mia;
pub mod nn;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
