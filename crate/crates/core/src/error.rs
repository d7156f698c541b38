use thiserror::Error;

use crate::kernel::KernelError;
use crate::schedule::ScheduleError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model has no finite noise kernel")]
    NoFiniteKernel,
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { what: &'static str, iterations: usize, residual: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
