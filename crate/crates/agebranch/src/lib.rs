//! Explosion analysis for age-dependent branching processes, including processes
//! thinned by contagious or incubation periods.
//!
//! - [`dist`]: offspring and lifetime laws.
//! - [`fpe`]: fixed-point equations for the explosion-time survival function.
//! - [`minsum`]: the min-summability classifier.
//! - [`sim`]: Monte Carlo simulation, domination tests and path search.

// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod fpe;
pub mod minsum;
pub mod sim;
mod exec;
pub mod stats;

pub use exec::{trial_rng, Exec};
