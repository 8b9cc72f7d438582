//! Fully implicit Euler discretisation of two-dimensional Boussinesq convection in a channel,
//! with monitors that check the discrete energy, maximum-principle and absorbing-ball bounds
//! along computed trajectories.

pub mod bounds_monitor;
pub mod cli_io;
pub mod error;
mod fourier;
pub mod grid_fields;
pub mod gronwall;
pub mod attractor_lab;
mod krylov;
pub mod maximum_principle;
pub mod operators;
pub mod stepper;

pub use error::{Error, Result};
