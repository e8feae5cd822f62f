use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    EventKind, FairnessRefresh, Ledger, LedgerReason, PaymentRule, Phase, ReplayError,
    SessionConfig, SessionError, SessionEvent,
};
use crate::energy::{feasible_outcomes, outcome_costs, CostVector};
use crate::fairness::{optimize_fairness, FairnessSolution, MomentCache, PriorSet, TypeCounts};
use crate::mechanism::{
    welfare, AgvMechanism, ComfortType, ExpectationMode, MechanismParams, OccupantId, Outcome,
    OutcomeKind, PaymentVector, TypeDistribution, ValuationTable, WelfareBreakdown,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportSource {
    Manual,
    Defaulted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub comfort_type: ComfortType,
    pub at_ms: i64,
    pub source: ReportSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    pub welfare: WelfareBreakdown,
    pub payments: Option<PaymentVector>,
    pub params: Option<MechanismParams>,
    pub decided_at_ms: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundState {
    Open,
    Decided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub index: u64,
    pub t0_c: i32,
    pub phase: Phase,
    pub costs: CostVector,
    pub opened_at_ms: i64,
    pub deadline_ms: i64,
    pub reports: BTreeMap<OccupantId, Report>,
    pub decision: Option<Decision>,
}

impl Round {
    pub fn state(&self) -> RoundState {
        if self.decision.is_some() {
            RoundState::Decided
        } else {
            RoundState::Open
        }
    }

    pub fn feasible(&self) -> Vec<OutcomeKind> {
        self.costs.feasible_kinds()
    }

    /// Reported types in occupancy order; `None` for anyone missing.
    pub fn types_for(&self, occupancy: &[OccupantId]) -> Option<Vec<ComfortType>> {
        occupancy
            .iter()
            .map(|o| self.reports.get(o).map(|r| r.comfort_type))
            .collect()
    }
}

/// Everything a replay must reproduce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub config: SessionConfig,
    pub created_at_ms: i64,
    pub last_seq: u64,
    pub t0_c: i32,
    pub phase: Phase,
    /// Position in the collection sweep.
    pub collection_step: usize,
    pub rounds: Vec<Round>,
    /// Manual report counts per occupant and temperature.
    pub counts: BTreeMap<OccupantId, BTreeMap<i32, TypeCounts>>,
    pub ledger: Ledger,
    /// Fairness solutions per temperature for the current phase.
    pub fairness: BTreeMap<i32, FairnessRefresh>,
}

impl SessionState {
    fn created(session_id: String, config: SessionConfig, at_ms: i64) -> Self {
        let t0_c = match config.phase {
            Phase::PreferenceCollection => config.temp_lower,
            Phase::FairAllocation => config.initial_temp,
        };
        Self {
            session_id,
            t0_c,
            phase: config.phase,
            created_at_ms: at_ms,
            last_seq: 1,
            collection_step: 0,
            rounds: Vec::new(),
            counts: config
                .occupancy
                .iter()
                .map(|o| (o.clone(), BTreeMap::new()))
                .collect(),
            ledger: Ledger::open_accounts(&config.occupancy),
            fairness: BTreeMap::new(),
            config,
        }
    }

    pub fn prior(&self, occupant: &OccupantId, t0_c: i32) -> TypeDistribution {
        self.counts
            .get(occupant)
            .and_then(|m| m.get(&t0_c))
            .copied()
            .unwrap_or_default()
            .distribution(self.config.smoothing)
    }

    pub fn priors_at(&self, t0_c: i32) -> Vec<TypeDistribution> {
        self.config
            .occupancy
            .iter()
            .map(|o| self.prior(o, t0_c))
            .collect()
    }

    pub fn open_round(&self) -> Option<&Round> {
        self.rounds.last().filter(|r| r.state() == RoundState::Open)
    }

    fn apply(&mut self, event: &SessionEvent) -> Result<(), String> {
        match &event.kind {
            EventKind::SessionCreated { .. } => return Err("session already created".into()),
            EventKind::RoundOpened {
                round,
                t0_c,
                phase,
                costs,
                deadline_ms,
            } => {
                if self.open_round().is_some() {
                    return Err("a round is already open".into());
                }
                if *round != self.rounds.len() as u64 {
                    return Err(format!("expected round {}, got {round}", self.rounds.len()));
                }
                self.rounds.push(Round {
                    index: *round,
                    t0_c: *t0_c,
                    phase: *phase,
                    costs: costs.clone(),
                    opened_at_ms: event.at_ms,
                    deadline_ms: *deadline_ms,
                    reports: BTreeMap::new(),
                    decision: None,
                });
            }
            EventKind::ReportSubmitted {
                round,
                occupant,
                comfort_type,
            }
            | EventKind::ReportDefaulted {
                round,
                occupant,
                comfort_type,
            } => {
                let source = if matches!(event.kind, EventKind::ReportSubmitted { .. }) {
                    ReportSource::Manual
                } else {
                    ReportSource::Defaulted
                };
                if !self.config.occupancy.contains(occupant) {
                    return Err(format!("unknown occupant {occupant}"));
                }
                let r = self.open_round_mut(*round)?;
                r.reports.insert(
                    occupant.clone(),
                    Report {
                        comfort_type: *comfort_type,
                        at_ms: event.at_ms,
                        source,
                    },
                );
            }
            EventKind::RoundDecided {
                round,
                outcome,
                welfare,
                payments,
                params,
                refresh,
                next_t0_c,
                next_phase,
            } => {
                let at_ms = event.at_ms;
                let r = self.open_round_mut(*round)?;
                r.decision = Some(Decision {
                    outcome: *outcome,
                    welfare: *welfare,
                    payments: payments.clone(),
                    params: params.clone(),
                    decided_at_ms: at_ms,
                });
                let t0_c = r.t0_c;
                let phase = r.phase;
                let manual: Vec<(OccupantId, ComfortType)> = r
                    .reports
                    .iter()
                    .filter(|(_, rep)| rep.source == ReportSource::Manual)
                    .map(|(o, rep)| (o.clone(), rep.comfort_type))
                    .collect();
                for (o, t) in manual {
                    self.counts
                        .entry(o)
                        .or_default()
                        .entry(t0_c)
                        .or_default()
                        .observe(t);
                }
                if let Some(refresh) = refresh {
                    self.fairness.insert(refresh.t0_c, refresh.clone());
                }
                if phase == Phase::PreferenceCollection {
                    self.collection_step += 1;
                }
                if *next_phase != self.phase {
                    self.fairness.clear();
                }
                self.phase = *next_phase;
                self.t0_c = *next_t0_c;
            }
            EventKind::LedgerPosted { entry } => {
                if !self.config.occupancy.contains(&entry.occupant) {
                    return Err(format!("unknown occupant {}", entry.occupant));
                }
                self.ledger.apply(entry.clone());
            }
        }
        self.last_seq = event.seq;
        Ok(())
    }

    fn open_round_mut(&mut self, round: u64) -> Result<&mut Round, String> {
        match self.rounds.last_mut() {
            Some(r) if r.index == round && r.decision.is_none() => Ok(r),
            _ => Err(format!("round {round} is not open")),
        }
    }
}

/// Acknowledgment of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportAck {
    pub round: u64,
    pub occupant: OccupantId,
    pub comfort_type: ComfortType,
    /// False when the same type was already on record.
    pub recorded: bool,
}

/// An event-sourced session. Every mutation appends events, and state is
/// only ever changed by applying them.
#[derive(Clone, Debug)]
pub struct Session {
    state: SessionState,
    events: Vec<SessionEvent>,
    table: ValuationTable,
}

impl Session {
    pub fn create(
        session_id: impl Into<String>,
        config: SessionConfig,
        now_ms: i64,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        let event = SessionEvent {
            seq: 1,
            at_ms: now_ms,
            kind: EventKind::SessionCreated {
                session_id: session_id.into(),
                config,
            },
        };
        Ok(Self::replay(std::slice::from_ref(&event))?.expect("one event"))
    }

    /// Rebuild a session from its history; `None` for an empty log.
    pub fn replay(events: &[SessionEvent]) -> Result<Option<Self>, ReplayError> {
        let Some(first) = events.first() else {
            return Ok(None);
        };
        if first.seq != 1 {
            return Err(ReplayError::Gap {
                expected: 1,
                found: first.seq,
            });
        }
        let EventKind::SessionCreated { session_id, config } = &first.kind else {
            return Err(ReplayError::Inconsistent {
                seq: 1,
                message: "log must start with session_created".into(),
            });
        };
        let mut session = Self {
            state: SessionState::created(session_id.clone(), config.clone(), first.at_ms),
            events: vec![first.clone()],
            table: ValuationTable::default(),
        };
        for event in &events[1..] {
            let expected = session.state.last_seq + 1;
            if event.seq != expected {
                return Err(ReplayError::Gap {
                    expected,
                    found: event.seq,
                });
            }
            session
                .state
                .apply(event)
                .map_err(|message| ReplayError::Inconsistent {
                    seq: event.seq,
                    message,
                })?;
            session.events.push(event.clone());
        }
        Ok(Some(session))
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.state.config
    }

    pub fn id(&self) -> &str {
        &self.state.session_id
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn events_after(&self, seq: u64) -> &[SessionEvent] {
        let start = (seq as usize).min(self.events.len());
        &self.events[start..]
    }

    pub fn last_seq(&self) -> u64 {
        self.state.last_seq
    }

    pub fn t0_c(&self) -> i32 {
        self.state.t0_c
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn rounds(&self) -> &[Round] {
        &self.state.rounds
    }

    pub fn current_round(&self) -> Option<&Round> {
        self.state.rounds.last()
    }

    pub fn ledger(&self) -> &Ledger {
        &self.state.ledger
    }

    pub fn ledger_balance(&self, occupant: &OccupantId) -> Result<f64, SessionError> {
        self.state
            .ledger
            .balance(occupant)
            .ok_or_else(|| SessionError::UnknownOccupant(occupant.clone()))
    }

    pub fn valuation_table(&self) -> &ValuationTable {
        &self.table
    }

    pub fn fairness_solution(&self, t0_c: i32) -> Option<&FairnessSolution> {
        self.state.fairness.get(&t0_c).map(|r| &r.solution)
    }

    /// Smoothed priors for every occupant at every temperature point.
    pub fn prior_set(&self) -> PriorSet {
        let mut set = PriorSet::new();
        for o in &self.state.config.occupancy {
            for t0 in self.state.config.temp_lower..=self.state.config.temp_upper {
                set.insert(o.clone(), t0, self.state.prior(o, t0));
            }
        }
        set
    }

    /// The type an absent occupant is assumed to report: the mode of their
    /// prior at `t0_c`, lowest id on ties.
    pub fn default_report(&self, occupant: &OccupantId, t0_c: i32) -> ComfortType {
        self.state.prior(occupant, t0_c).mode()
    }

    /// Canonical JSON of the replayable state.
    pub fn serialize_state(&self) -> String {
        serde_json::to_string(&self.state).expect("state serializes")
    }

    fn emit(&mut self, at_ms: i64, kind: EventKind) -> Result<(), SessionError> {
        let event = SessionEvent {
            seq: self.state.last_seq + 1,
            at_ms,
            kind,
        };
        self.state.apply(&event).map_err(SessionError::Internal)?;
        self.events.push(event);
        Ok(())
    }

    pub fn open_round(&mut self, now_ms: i64) -> Result<&Round, SessionError> {
        if let Some(r) = self.state.open_round() {
            return Err(SessionError::RoundStillOpen { round: r.index });
        }
        let index = self.state.rounds.len() as u64;
        let t0_c = self.state.t0_c;
        let costs = self.round_costs(index as usize, t0_c)?;
        let deadline_ms = now_ms + self.state.config.round_length_ms;
        let phase = self.state.phase;
        self.emit(
            now_ms,
            EventKind::RoundOpened {
                round: index,
                t0_c,
                phase,
                costs,
                deadline_ms,
            },
        )?;
        Ok(self.state.rounds.last().expect("just opened"))
    }

    fn round_costs(&self, index: usize, t0_c: i32) -> Result<CostVector, SessionError> {
        let config = &self.state.config;
        let feasible = feasible_outcomes(t0_c, config.bounds());
        let costs = match &config.cost_table {
            Some(table) => table
                .for_round(index)
                .ok_or_else(|| SessionError::Energy("cost table is empty".into()))?
                .cost_vector(t0_c, &feasible, config.energy.base_setpoint_c),
            None => outcome_costs(t0_c, &feasible, &config.weather_for(index), &config.energy),
        };
        costs.map_err(|e| SessionError::Energy(e.to_string()))
    }

    pub fn submit_report(
        &mut self,
        occupant: &OccupantId,
        comfort_type: ComfortType,
        now_ms: i64,
    ) -> Result<ReportAck, SessionError> {
        if !self.state.config.occupancy.contains(occupant) {
            return Err(SessionError::UnknownOccupant(occupant.clone()));
        }
        let round = match self.state.rounds.last() {
            None => return Err(SessionError::NoOpenRound),
            Some(r) if r.state() == RoundState::Decided => {
                return Err(SessionError::LateReport { round: r.index })
            }
            Some(r) => r,
        };
        let index = round.index;
        let unchanged = round
            .reports
            .get(occupant)
            .is_some_and(|r| r.source == ReportSource::Manual && r.comfort_type == comfort_type);
        if !unchanged {
            self.emit(
                now_ms,
                EventKind::ReportSubmitted {
                    round: index,
                    occupant: occupant.clone(),
                    comfort_type,
                },
            )?;
        }
        Ok(ReportAck {
            round: index,
            occupant: occupant.clone(),
            comfort_type,
            recorded: !unchanged,
        })
    }

    /// Decide the open round: fill in defaults, choose the outcome, post
    /// payments in the allocation phase, and move the temperature.
    pub fn close_round(&mut self, now_ms: i64) -> Result<&Decision, SessionError> {
        let Some(round) = self.state.open_round() else {
            return Err(SessionError::NoOpenRound);
        };
        let index = round.index;
        let t0_c = round.t0_c;
        let occupancy = self.state.config.occupancy.clone();
        let missing: Vec<OccupantId> = occupancy
            .iter()
            .filter(|o| !round.reports.contains_key(*o))
            .cloned()
            .collect();
        for occupant in missing {
            let comfort_type = self.default_report(&occupant, t0_c);
            self.emit(
                now_ms,
                EventKind::ReportDefaulted {
                    round: index,
                    occupant,
                    comfort_type,
                },
            )?;
        }

        let round = self.state.rounds.last().expect("open round");
        let types = round
            .types_for(&occupancy)
            .expect("every occupant reported");
        let costs = round.costs.clone();
        let kind = match round.phase {
            Phase::PreferenceCollection => self.collection_decision(&types, &costs)?,
            Phase::FairAllocation => self.allocation_decision(&types, &costs, t0_c)?,
        };
        let payments = match &kind {
            EventKind::RoundDecided { payments, .. } => payments.clone(),
            _ => unreachable!(),
        };
        self.emit(now_ms, kind)?;
        if let Some(payments) = payments {
            for (occupant, t) in occupancy.iter().zip(&payments.0) {
                let entry =
                    self.state
                        .ledger
                        .prepare(occupant, index, -t, LedgerReason::MechanismPayment);
                self.emit(now_ms, EventKind::LedgerPosted { entry })?;
            }
        }
        Ok(self.state.rounds[index as usize]
            .decision
            .as_ref()
            .expect("decided"))
    }

    fn collection_decision(
        &self,
        types: &[ComfortType],
        costs: &CostVector,
    ) -> Result<EventKind, SessionError> {
        let sweep = self.state.config.collection_sweep();
        let step = self.state.collection_step;
        let t0_c = self.state.t0_c;
        let (next_t0_c, next_phase) = match sweep.get(step + 1) {
            Some(&next) => (next, Phase::PreferenceCollection),
            None => (self.state.config.temp_lower, Phase::FairAllocation),
        };
        let outcome_kind =
            OutcomeKind::from_offset((next_t0_c - t0_c).clamp(-1, 1)).expect("unit step");
        let outcome = Outcome::relative_to(t0_c, outcome_kind);
        let welfare = welfare(types, outcome, costs, &self.table)?;
        Ok(EventKind::RoundDecided {
            round: self.state.rounds.len() as u64 - 1,
            outcome,
            welfare,
            payments: None,
            params: None,
            refresh: None,
            next_t0_c: outcome.setpoint_c,
            next_phase,
        })
    }

    fn allocation_decision(
        &self,
        types: &[ComfortType],
        costs: &CostVector,
        t0_c: i32,
    ) -> Result<EventKind, SessionError> {
        let n = types.len();
        let priors = self.state.priors_at(t0_c);
        let config = &self.state.config;
        let mode = match ExpectationMode::auto(n, config.seed) {
            ExpectationMode::MonteCarlo { seed, .. } => ExpectationMode::MonteCarlo {
                samples: config.mc_samples,
                seed,
            },
            exhaustive => exhaustive,
        };

        let mut refresh = None;
        let mechanism = if config.payment_rule == PaymentRule::StandardAgv || n == 1 {
            AgvMechanism::new(
                &priors,
                costs,
                &self.table,
                MechanismParams::standard(n),
                mode,
            )?
        } else {
            let stale = match self.state.fairness.get(&t0_c) {
                None => true,
                Some(cached) => cached
                    .priors
                    .iter()
                    .zip(&priors)
                    .any(|(old, new)| old.total_variation(new) > config.refresh_tv),
            };
            if stale {
                let cache = MomentCache::compute(&priors, costs, &self.table, mode)?;
                let solution = optimize_fairness(&cache)?;
                let mechanism = AgvMechanism::from_tables(
                    cache.tables.clone(),
                    costs,
                    &self.table,
                    solution.params.clone(),
                )?;
                refresh = Some(FairnessRefresh {
                    t0_c,
                    priors: priors.clone(),
                    solution,
                });
                mechanism
            } else {
                let params = self.state.fairness[&t0_c].solution.params.clone();
                AgvMechanism::new(&priors, costs, &self.table, params, mode)?
            }
        };
        let settlement = mechanism.settle(types)?;
        Ok(EventKind::RoundDecided {
            round: self.state.rounds.len() as u64 - 1,
            outcome: settlement.outcome,
            welfare: settlement.welfare,
            payments: Some(settlement.payments),
            params: Some(mechanism.params().clone()),
            refresh,
            next_t0_c: settlement.outcome.setpoint_c,
            next_phase: Phase::FairAllocation,
        })
    }
}
