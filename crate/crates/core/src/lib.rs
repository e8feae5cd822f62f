//! Shared-space air-conditioning set-point policy.
//!
//! Occupants report comfort types each round; [`mechanism`] picks the
//! set-point change and computes budget-balanced payments, [`fairness`] tunes
//! the mechanism parameters, [`energy`] prices outcomes, [`session`] runs the
//! round protocol as an event-sourced state machine, and [`sim`] drives
//! seeded scenarios and audits.

pub mod energy;
pub mod fairness;
pub mod mechanism;
pub mod money;
pub mod session;
pub mod sim;

pub use energy::{CostVector, EnergyError, EnergyModelConfig, WeatherSample};
pub use fairness::{FairnessSolution, MomentCache, PriorSet};
pub use mechanism::{
    AgvMechanism, ComfortType, ExpectationMode, MechanismError, MechanismParams, OccupantId,
    Outcome, OutcomeKind, PaymentVector, TypeDistribution, TypeProfile, ValuationTable,
};
