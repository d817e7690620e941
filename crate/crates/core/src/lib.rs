//! Motor primitive learning and chaining by free-energy minimisation.
//!
//! A fixed random reservoir turns an activation signal into joint-velocity
//! commands for a two-link drawing arm. A cyclic Kohonen map clusters the
//! resulting drawings, and antithetic random search tunes each activation
//! signal so that its drawing lands on the map unit matching its index.
//! Learned primitives are then chained greedily by expected free energy to
//! draw letters.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canvas;
pub mod chaining;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod free_energy;
pub mod kohonen;
pub mod learner;
pub mod motor;
pub mod repertoire_file;
pub mod reservoir;
pub mod rng;

pub use error::{Error, Result};
