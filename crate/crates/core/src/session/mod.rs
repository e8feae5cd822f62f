//! The round protocol as an event-sourced state machine.
//!
//! Commands on [`Session`] validate input, compute results and append
//! [`SessionEvent`]s; state only changes by applying events, so replaying a
//! log rebuilds an identical session.

mod clock;
mod config;
mod engine;
mod events;
mod ledger;
mod log;

pub use clock::{Clock, LogicalClock, WallClock};
pub use config::{PaymentRule, Phase, SessionConfig};
pub use engine::{
    Decision, Report, ReportAck, ReportSource, Round, RoundState, Session, SessionState,
};
pub use events::{EventKind, FairnessRefresh, SessionEvent};
pub use ledger::{Ledger, LedgerEntry, LedgerReason};
pub use log::{read_log, replay_file, EventLog};

use thiserror::Error;

use crate::fairness::FairnessError;
use crate::mechanism::{MechanismError, OccupantId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("malformed config: {0}")]
    Format(String),
    #[error("{0}")]
    Io(String),
    #[error("round {round} is still open")]
    RoundStillOpen { round: u64 },
    #[error("no round is open")]
    NoOpenRound,
    #[error("round {round} has already been decided")]
    LateReport { round: u64 },
    #[error("unknown occupant {0}")]
    UnknownOccupant(OccupantId),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error("energy model: {0}")]
    Energy(String),
    #[error("event rejected: {0}")]
    Internal(String),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("expected event seq {expected}, found {found}")]
    Gap { expected: u64, found: u64 },
    #[error("event seq {seq} is inconsistent with the log: {message}")]
    Inconsistent { seq: u64, message: String },
    #[error("line {line} (after seq {after_seq}) is corrupt: {message}")]
    Corrupt {
        line: usize,
        after_seq: u64,
        message: String,
    },
    #[error("{0}")]
    Io(String),
}
