//! Simulation and stochastic-stability analysis of aspiration-based
//! perturbed learning automata (APLA) on finite games with positive,
//! noisily measured utilities.
//!
//! - [`game`]: games, action profiles, the noise model and hypothesis checks.
//! - [`dynamics`]: the per-step learning rule and trajectories.
//! - [`analysis`]: pure strategy states, neighborhoods, constant-action
//!   closed forms.
//! - [`stability`]: the Monte-Carlo chain over pure strategy states, its
//!   stationary distribution and occupancy of the perturbed process.
//! - [`config`] and [`commands`]: the experiment surface used by the
//!   `apla-lab` binary.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod presets;
pub mod rng;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
