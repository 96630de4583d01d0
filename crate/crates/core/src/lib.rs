//! Entropic `L_p` performance limits for strictly causal feedback loops.
//!
//! The crate computes lower bounds on the error `e_k = d_k + z_k` of a loop
//! whose feedback `z_k` is any strictly causal function of past errors,
//! simulates such loops with built-in and learned controllers, and checks
//! bounds and equality conditions by Monte Carlo.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod linear_prediction;
pub mod processes;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
