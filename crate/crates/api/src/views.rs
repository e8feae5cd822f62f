use serde::Serialize;
use serde_json::Value;
use setpoint_core::energy::OutcomeCost;
use setpoint_core::money;
use setpoint_core::session::{
    EventKind, LedgerEntry, Phase, ReportSource, Round, RoundState, Session, SessionConfig,
    SessionEvent,
};
use setpoint_core::{OccupantId, Outcome};

use crate::auth::{IssuedTokens, Viewer};

#[derive(Debug, Serialize)]
pub struct CreatedView {
    pub session_id: String,
    #[serde(flatten)]
    pub tokens: IssuedTokens,
    pub last_seq: u64,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub config: SessionConfig,
    pub phase: Phase,
    pub t0_c: i32,
    pub rounds: usize,
    pub last_seq: u64,
}

impl SessionView {
    pub fn new(session: &Session) -> Self {
        Self {
            session_id: session.id().to_string(),
            config: session.config().clone(),
            phase: session.phase(),
            t0_c: session.t0_c(),
            rounds: session.rounds().len(),
            last_seq: session.last_seq(),
        }
    }
}

/// The current (latest) round as seen by one caller.
#[derive(Debug, Serialize)]
pub struct RoundView {
    pub session_id: String,
    pub last_seq: u64,
    /// Where the next round will start.
    pub phase: Phase,
    pub t0_c: i32,
    pub round: Option<RoundDetail>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub your_balance: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RoundDetail {
    pub index: u64,
    pub state: RoundState,
    pub phase: Phase,
    pub t0_c: i32,
    pub opened_at_ms: i64,
    pub deadline_ms: i64,
    /// Feasible outcomes with indicative costs.
    pub options: Vec<OutcomeCost>,
    pub reports_submitted: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub you_reported: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub your_type: Option<u8>,
    pub decision: Option<DecisionView>,
}

#[derive(Debug, Serialize)]
pub struct DecisionView {
    pub outcome: Outcome,
    pub decided_at_ms: i64,
    #[serde(with = "money::decimal")]
    pub incremental_cost: f64,
    /// Present for occupants in allocation rounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub your_payment: Option<String>,
    /// All payments, for the admin view.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payments: Option<Vec<String>>,
}

impl RoundView {
    pub fn new(session: &Session, viewer: &Viewer) -> Self {
        let your_balance = viewer
            .occupant()
            .and_then(|o| session.ledger().balance(o))
            .map(money::to_decimal);
        Self {
            session_id: session.id().to_string(),
            last_seq: session.last_seq(),
            phase: session.phase(),
            t0_c: session.t0_c(),
            round: session
                .current_round()
                .map(|r| RoundDetail::new(session, r, viewer)),
            your_balance,
        }
    }
}

impl RoundDetail {
    fn new(session: &Session, round: &Round, viewer: &Viewer) -> Self {
        let me = viewer.occupant();
        let mine = me.and_then(|o| round.reports.get(o));
        let decision = round.decision.as_ref().map(|d| {
            let payments = d.payments.as_ref();
            DecisionView {
                outcome: d.outcome,
                decided_at_ms: d.decided_at_ms,
                incremental_cost: d.welfare.incremental_cost,
                your_payment: me
                    .and_then(|o| occupant_index(session, o))
                    .and_then(|i| payments.map(|p| money::to_decimal(p.0[i]))),
                payments: (*viewer == Viewer::Admin)
                    .then(|| payments.map(|p| p.0.iter().map(|v| money::to_decimal(*v)).collect()))
                    .flatten(),
            }
        });
        Self {
            index: round.index,
            state: round.state(),
            phase: round.phase,
            t0_c: round.t0_c,
            opened_at_ms: round.opened_at_ms,
            deadline_ms: round.deadline_ms,
            options: round.costs.entries.clone(),
            reports_submitted: round
                .reports
                .values()
                .filter(|r| r.source == ReportSource::Manual)
                .count(),
            you_reported: me.map(|_| mine.is_some_and(|r| r.source == ReportSource::Manual)),
            your_type: mine.map(|r| r.comfort_type.id()),
            decision,
        }
    }
}

fn occupant_index(session: &Session, occupant: &OccupantId) -> Option<usize> {
    session
        .config()
        .occupancy
        .iter()
        .position(|o| o == occupant)
}

#[derive(Debug, Serialize)]
pub struct LedgerView {
    pub occupant: OccupantId,
    pub entries: Vec<LedgerEntry>,
    #[serde(with = "money::decimal")]
    pub balance: f64,
    /// Balance rounded to cents.
    pub balance_display: String,
}

impl LedgerView {
    pub fn new(session: &Session, occupant: &OccupantId) -> Self {
        let balance = session.ledger().balance(occupant).unwrap_or(0.0);
        Self {
            occupant: occupant.clone(),
            entries: session.ledger().entries_for(occupant).cloned().collect(),
            balance,
            balance_display: money::display_cents(balance),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EventsView {
    pub events: Vec<Value>,
    pub last_seq: u64,
}

/// An event as the caller may see it. Every event keeps its place in the
/// sequence; only private fields are dropped. Other occupants' reported
/// types, payments and ledger entries, and the learned priors, are private.
pub fn project(session: &Session, event: &SessionEvent, viewer: &Viewer) -> Value {
    let mut value = serde_json::to_value(event).expect("events serialize");
    let obj = value.as_object_mut().expect("events are objects");
    match &event.kind {
        EventKind::ReportSubmitted { occupant, .. }
        | EventKind::ReportDefaulted { occupant, .. } => {
            if !viewer.sees(occupant) {
                obj.remove("comfort_type");
            }
        }
        EventKind::RoundDecided { payments, .. } => {
            if let (Some(me), Some(p)) = (viewer.occupant(), payments) {
                if let Some(i) = occupant_index(session, me) {
                    obj.insert(
                        "your_payment".into(),
                        Value::String(money::to_decimal(p.0[i])),
                    );
                }
            }
            if *viewer != Viewer::Admin {
                obj.remove("payments");
                obj.remove("refresh");
            }
        }
        EventKind::LedgerPosted { entry } => {
            if !viewer.sees(&entry.occupant) {
                obj.remove("entry");
            }
        }
        EventKind::SessionCreated { .. } | EventKind::RoundOpened { .. } => {}
    }
    value
}
