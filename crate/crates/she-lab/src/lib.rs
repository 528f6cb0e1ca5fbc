//! Simulation-and-bounds laboratory for stochastic heat equations driven by
//! compensated and non-compensated Poisson noise.
//!
//! The crate evaluates alpha-stable heat kernels and their two-sided
//! estimates, samples Poisson random measures over a shell-decomposed Lévy
//! measure, time-steps the mild solution on a spatial lattice, estimates
//! moment growth by Monte Carlo, and checks the observed growth against
//! comparison-ODE lower bounds and a parameter-regime classifier.

pub mod config;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod moments;
pub mod noise;
pub mod rng;
pub mod solver;
pub mod odes;
pub mod sigma;

pub use error::{Result, SheError};
