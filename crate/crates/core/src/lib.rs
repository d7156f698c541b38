//! Stochastic approximation with state-dependent Markov noise, and the
//! large-deviation machinery around it: step schedules and time scales,
//! finite noise kernels, simulation and the limit ODE, Hamiltonians and
//! local rates, the action functional, Monte Carlo Laplace estimates and
//! three application models.

pub mod action;
pub mod config;
pub mod coupling;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod models;
pub mod rate;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
