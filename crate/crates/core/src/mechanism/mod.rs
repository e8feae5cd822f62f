//! Outcome selection and budget-balanced expected-externality payments.
//!
//! Each round every occupant reports a [`ComfortType`]. The engine picks the
//! set-point change with the highest reported welfare (valuations minus the
//! incremental energy cost) and charges
//!
//! ```text
//! t_i = alpha_i * dC(x*) - psi_i(theta_i) + sum_{j != i} beta_ij * psi_j(theta_j)
//! ```
//!
//! where `psi_i` is the expected cost-adjusted value the other occupants get
//! when `i` reports `theta_i`, the expectation running over their priors.
//! Because every column of `beta` sums to one the `psi` terms cancel in the
//! total, so payments always add up to `dC(x*)`. Truthful reporting is a
//! Bayesian equilibrium for any valid `(alpha, beta)`; the fairness module
//! chooses the parameters.

mod agv;
mod params;
mod types;

pub use agv::{
    agv_payment_generalized, agv_payment_standard, expected_externality, for_each_profile,
    net_benefit, profile_count, select_outcome, valuation, welfare, AgvMechanism, ExpectationMode,
    ExternalityTables, PaymentVector, Settlement, WelfareBreakdown, EXHAUSTIVE_LIMIT,
    WELFARE_TIE_TOLERANCE,
};
pub use params::{MechanismParams, PARAM_TOLERANCE};
pub use types::{
    ComfortType, OccupantId, Outcome, OutcomeKind, PreferenceGroup, TypeDistribution, TypeProfile,
    ValuationTable, DISTRIBUTION_TOLERANCE, TYPE_COUNT, VALUATION_BOUND,
};

pub(crate) use agv::OutcomeSelector;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("comfort type id {0} is not in 1..=9")]
    InvalidType(u8),
    #[error("invalid valuation table: {0}")]
    InvalidTable(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("type profile is empty")]
    EmptyProfile,
    #[error("occupant {0} reported twice")]
    DuplicateOccupant(OccupantId),
    #[error("outcome {0} is not feasible this round")]
    OutcomeNotFeasible(OutcomeKind),
    #[error("no feasible outcomes")]
    EmptyFeasibleSet,
    #[error("mechanism parameters violate a constraint: {0}")]
    ConstraintViolation(String),
    #[error("a single occupant has no externality to redistribute")]
    DegenerateGroup,
    #[error("prior not initialized for occupant {occupant} at {t0_c} C")]
    PriorNotInitialized { occupant: OccupantId, t0_c: i32 },
    #[error("expected {expected} priors, found {found}")]
    PriorMismatch { expected: usize, found: usize },
    #[error("exhaustive enumeration of 9^{n} profiles exceeds the limit")]
    StateSpaceOverflow { n: usize },
    #[error("{0}")]
    Io(String),
}
