use serde::{Deserialize, Serialize};

use super::{LedgerEntry, Phase, SessionConfig};
use crate::energy::CostVector;
use crate::fairness::FairnessSolution;
use crate::mechanism::{
    ComfortType, MechanismParams, OccupantId, Outcome, PaymentVector, TypeDistribution,
    WelfareBreakdown,
};

/// One entry of the append-only session history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Starts at 1 and increases by one per event.
    pub seq: u64,
    pub at_ms: i64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated {
        session_id: String,
        config: SessionConfig,
    },
    RoundOpened {
        round: u64,
        t0_c: i32,
        phase: Phase,
        costs: CostVector,
        deadline_ms: i64,
    },
    ReportSubmitted {
        round: u64,
        occupant: OccupantId,
        comfort_type: ComfortType,
    },
    ReportDefaulted {
        round: u64,
        occupant: OccupantId,
        comfort_type: ComfortType,
    },
    RoundDecided {
        round: u64,
        outcome: Outcome,
        welfare: WelfareBreakdown,
        /// Absent in the collection phase.
        payments: Option<PaymentVector>,
        params: Option<MechanismParams>,
        /// Present when this round re-solved the fairness parameters.
        refresh: Option<FairnessRefresh>,
        next_t0_c: i32,
        next_phase: Phase,
    },
    LedgerPosted {
        entry: LedgerEntry,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SessionCreated { .. } => "session_created",
            EventKind::RoundOpened { .. } => "round_opened",
            EventKind::ReportSubmitted { .. } => "report_submitted",
            EventKind::ReportDefaulted { .. } => "report_defaulted",
            EventKind::RoundDecided { .. } => "round_decided",
            EventKind::LedgerPosted { .. } => "ledger_posted",
        }
    }
}

/// A fairness solution together with the priors it was solved under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessRefresh {
    pub t0_c: i32,
    pub priors: Vec<TypeDistribution>,
    pub solution: FairnessSolution,
}
