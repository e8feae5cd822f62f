//! Seeded synthetic-occupant experiments: scenario runs, incentive and
//! budget audits, fixed set-point comparisons, and price sweeps.

mod audit;
mod compare;
mod export;
mod scenario;

pub use audit::{
    audit_mechanism, audit_scenario, budget_audit, budget_audit_mechanism, corrupted_beta,
    efficiency_audit, ic_audit, ic_audit_mechanism, AuditDepth, BudgetReport, Deviation,
    EfficiencyReport, IcAuditReport, MechanismAudit, PointAudit, ScenarioAudit, BUDGET_TOLERANCE,
    EXHAUSTIVE_OPPONENT_LIMIT, EXHAUSTIVE_PROFILE_LIMIT, IC_TOLERANCE, SAMPLED_Z,
};
pub use compare::{
    baseline_compare, price_grid, price_sweep, BaselineReport, GroupComparison, PricePoint,
    PriceSweep,
};
pub use export::{
    baseline_csv, header_csv, occupants_csv, price_sweep_csv, rounds_csv, OCCUPANTS_HEADER,
    ROUNDS_HEADER,
};
pub use scenario::{
    round_energy_cost, run_scenario, run_with_session, sample_profile, thermal_prior, Aggregates,
    OccupantSummary, Policy, PriorGenerator, RoundRecord, ScenarioSpec, SessionResult,
};

use thiserror::Error;

use crate::fairness::FairnessError;
use crate::mechanism::MechanismError;
use crate::session::SessionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario field `{field}`: {message}")]
    InvalidScenario { field: String, message: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("{0}")]
    Io(String),
    #[error(
        "seed {seed}: generalized run has {generalized} allocation rounds, fixed baseline {fixed}"
    )]
    RoundMismatch {
        seed: u64,
        generalized: usize,
        fixed: usize,
    },
}
