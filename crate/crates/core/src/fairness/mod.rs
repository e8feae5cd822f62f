//! Two-stage tuning of the mechanism parameters.
//!
//! Stage one equalizes every occupant's expected net benefit; stage two
//! minimizes the summed variance of realized net benefits subject to that
//! equality. Expectations come from a [`MomentCache`] built once per round
//! configuration.

mod moments;
mod priors;
mod problem;
mod solver;

pub use moments::{
    basis_dim, build_moment_cache, exante_net_benefits, expost_variance_sum, MomentCache,
};
pub use priors::{prior_update, PriorSet, TypeCounts, DEFAULT_SMOOTHING};
pub use problem::{CostSpec, FairnessProblem};
pub use solver::{optimize_fairness, spread, FairnessSolution, SolverStatus, EQUALITY_TOLERANCE};

use thiserror::Error;

use crate::mechanism::MechanismError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FairnessError {
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("fairness tuning needs at least two occupants, found {0}")]
    TooFewOccupants(usize),
    #[error("cache is sized for {expected} occupants, parameters for {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed prior set: {0}")]
    Format(String),
    #[error("{0}")]
    Io(String),
}
