use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SimError;
use crate::energy::{load_cost_table, setpoint_cost, CostVector};
use crate::fairness::PriorSet;
use crate::mechanism::{
    ComfortType, OccupantId, Outcome, OutcomeKind, PaymentVector, TypeDistribution, TypeProfile,
    ValuationTable, WelfareBreakdown,
};
use crate::money;
use crate::session::{Clock, LogicalClock, PaymentRule, Phase, Session, SessionConfig};

const ROUND_MS: i64 = 30 * 60 * 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Generalized,
    StandardAgv,
    /// Hold one set-point for every round; the building pays everything.
    FixedSetpoint {
        setpoint_c: i32,
    },
}

impl Policy {
    pub fn label(&self) -> String {
        match self {
            Policy::Generalized => "generalized".into(),
            Policy::StandardAgv => "standard_agv".into(),
            Policy::FixedSetpoint { setpoint_c } => format!("fixed_{setpoint_c}"),
        }
    }
}

fn default_preferred_warm() -> f64 {
    25.0
}

fn default_preferred_cool() -> f64 {
    23.0
}

fn default_spread() -> f64 {
    1.0
}

fn default_sharpness() -> f64 {
    1.5
}

/// How the synthetic occupants' true type distributions are built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorGenerator {
    /// Every type equally likely at every temperature.
    Symmetric,
    /// Each occupant gets a preferred temperature drawn uniformly from
    /// `preferred_c ± spread_c`; the further the room is below it, the more
    /// likely a warmer report, and vice versa.
    SkewedWarm {
        #[serde(default = "default_preferred_warm")]
        preferred_c: f64,
        #[serde(default = "default_spread")]
        spread_c: f64,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
    },
    SkewedCool {
        #[serde(default = "default_preferred_cool")]
        preferred_c: f64,
        #[serde(default = "default_spread")]
        spread_c: f64,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
    },
    Custom {
        priors: PriorSet,
    },
}

/// Intensity mix inside each preference group, mildest first.
const COOLER_MIX: [f64; 3] = [0.5, 0.3, 0.2];
const CURRENT_MIX: [f64; 3] = [0.4, 0.3, 0.3];
const WARMER_MIX: [f64; 3] = [0.5, 0.3, 0.2];

/// Type distribution of an occupant who prefers `preferred_c` when the room
/// is at `t0_c`.
pub fn thermal_prior(preferred_c: f64, t0_c: i32, sharpness: f64) -> TypeDistribution {
    let gap = preferred_c - t0_c as f64;
    let cooler = (-sharpness * gap).exp();
    let current = 2.0;
    let warmer = (sharpness * gap).exp();
    let mut w = [0.0; 9];
    for k in 0..3 {
        w[k] = cooler * COOLER_MIX[k];
        w[3 + k] = current * CURRENT_MIX[k];
        w[6 + k] = warmer * WARMER_MIX[k];
    }
    TypeDistribution::from_weights(w).expect("positive weights")
}

impl PriorGenerator {
    /// True type distributions for every occupant and temperature point.
    pub fn generate(
        &self,
        occupants: &[OccupantId],
        bounds: (i32, i32),
        rng: &mut ChaCha8Rng,
    ) -> Result<PriorSet, SimError> {
        let thermal = |preferred_c: f64, spread_c: f64, sharpness: f64, rng: &mut ChaCha8Rng| {
            let mut set = PriorSet::new();
            for o in occupants {
                let p = preferred_c + spread_c * (2.0 * rng.random::<f64>() - 1.0);
                for t0 in bounds.0..=bounds.1 {
                    set.insert(o.clone(), t0, thermal_prior(p, t0, sharpness));
                }
            }
            set
        };
        Ok(match self {
            PriorGenerator::Symmetric => {
                PriorSet::filled(occupants, bounds.0..=bounds.1, TypeDistribution::uniform())
            }
            PriorGenerator::SkewedWarm {
                preferred_c,
                spread_c,
                sharpness,
            }
            | PriorGenerator::SkewedCool {
                preferred_c,
                spread_c,
                sharpness,
            } => thermal(*preferred_c, *spread_c, *sharpness, rng),
            PriorGenerator::Custom { priors } => {
                for o in occupants {
                    for t0 in bounds.0..=bounds.1 {
                        priors.for_occupants(std::slice::from_ref(o), t0)?;
                    }
                }
                priors.clone()
            }
        })
    }
}

fn default_fixed() -> i32 {
    22
}

/// A reproducible synthetic experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    /// Total rounds, collection phase included.
    pub rounds: usize,
    pub policy: Policy,
    pub priors: PriorGenerator,
    #[serde(default)]
    pub session: SessionConfig,
    /// Set-point of the fixed baseline in comparisons.
    #[serde(default = "default_fixed")]
    pub baseline_setpoint_c: i32,
    /// Cost table CSV, relative to the scenario file. Loaded into
    /// `session.cost_table` by [`ScenarioSpec::load`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_table_csv: Option<PathBuf>,
}

impl ScenarioSpec {
    /// Parse TOML or JSON, chosen by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let mut spec: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| SimError::Format(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| SimError::Format(format!("{}: {e}", path.display())))?
        };
        if let Some(rel) = &spec.cost_table_csv {
            let csv = path.parent().unwrap_or(Path::new(".")).join(rel);
            let table = load_cost_table(&csv, spec.session.bounds()).map_err(|e| {
                SimError::InvalidScenario {
                    field: "cost_table_csv".into(),
                    message: e.to_string(),
                }
            })?;
            spec.session.cost_table = Some(table);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.session.validate()?;
        if self.rounds == 0 {
            return Err(SimError::InvalidScenario {
                field: "rounds".into(),
                message: "must be positive".into(),
            });
        }
        let (lo, hi) = self.session.bounds();
        for (field, t) in [
            ("baseline_setpoint_c", self.baseline_setpoint_c),
            (
                "policy",
                match self.policy {
                    Policy::FixedSetpoint { setpoint_c } => setpoint_c,
                    _ => lo,
                },
            ),
        ] {
            if t < lo || t > hi {
                return Err(SimError::InvalidScenario {
                    field: field.into(),
                    message: format!("set-point {t} outside [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }

    pub fn with_policy(&self, policy: Policy) -> Self {
        Self {
            policy,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Rounds spent in preference collection before allocation starts.
    pub fn collection_rounds(&self) -> usize {
        match self.session.phase {
            Phase::PreferenceCollection => self.session.collection_sweep().len(),
            Phase::FairAllocation => 0,
        }
    }

    fn phase_of(&self, round: usize) -> Phase {
        if round < self.collection_rounds() {
            Phase::PreferenceCollection
        } else {
            Phase::FairAllocation
        }
    }
}

/// Independent draws from each occupant's prior at `t0_c`.
pub fn sample_profile(
    priors: &PriorSet,
    occupants: &[OccupantId],
    t0_c: i32,
    rng: &mut impl Rng,
) -> Result<TypeProfile, SimError> {
    let dists = priors.for_occupants(occupants, t0_c)?;
    let reports = occupants
        .iter()
        .zip(dists)
        .map(|(o, d)| (o.clone(), d.sample_with(rng.random::<f64>())))
        .collect();
    Ok(TypeProfile::new(reports)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub index: usize,
    pub phase: Phase,
    pub t0_c: i32,
    pub feasible: Vec<OutcomeKind>,
    /// Absent for the fixed baseline, which never consults the mechanism.
    pub costs: Option<CostVector>,
    pub types: Vec<ComfortType>,
    pub outcome: Outcome,
    pub welfare: WelfareBreakdown,
    /// Electricity cost of holding the chosen set-point for the round.
    #[serde(with = "money::decimal")]
    pub energy_cost: f64,
    pub payments: Option<PaymentVector>,
    #[serde(with = "money::decimal_vec")]
    pub net_benefits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupantSummary {
    pub occupant: OccupantId,
    #[serde(with = "money::decimal")]
    pub mean_pi: f64,
    /// Sample variance across rounds, $^2.
    #[serde(with = "money::decimal")]
    pub var_pi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Mean over rounds of the summed valuations of the chosen outcome.
    #[serde(with = "money::decimal")]
    pub mean_comfort: f64,
    #[serde(with = "money::decimal")]
    pub total_energy_cost: f64,
    #[serde(with = "money::decimal")]
    pub total_incremental_cost: f64,
    pub occupants: Vec<OccupantSummary>,
}

impl Aggregates {
    pub fn from_rounds(occupants: &[OccupantId], rounds: &[RoundRecord]) -> Self {
        let m = rounds.len() as f64;
        let mean_comfort = rounds.iter().map(|r| r.welfare.sum_valuations).sum::<f64>() / m;
        let total_energy_cost = rounds.iter().map(|r| r.energy_cost).sum();
        let total_incremental_cost = rounds.iter().map(|r| r.welfare.incremental_cost).sum();
        let occupants = occupants
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let mean_pi = rounds.iter().map(|r| r.net_benefits[i]).sum::<f64>() / m;
                let var_pi = if rounds.len() > 1 {
                    rounds
                        .iter()
                        .map(|r| (r.net_benefits[i] - mean_pi).powi(2))
                        .sum::<f64>()
                        / (m - 1.0)
                } else {
                    0.0
                };
                OccupantSummary {
                    occupant: o.clone(),
                    mean_pi,
                    var_pi,
                }
            })
            .collect();
        Self {
            mean_comfort,
            total_energy_cost,
            total_incremental_cost,
            occupants,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub name: String,
    pub policy: Policy,
    pub seed: u64,
    pub config_hash: String,
    pub generator: PriorGenerator,
    /// The true type distributions reports were drawn from.
    pub true_priors: PriorSet,
    pub occupants: Vec<OccupantId>,
    pub rounds: Vec<RoundRecord>,
    pub aggregates: Aggregates,
}

impl SessionResult {
    /// Rounds in the allocation phase.
    pub fn allocation_rounds(&self) -> impl Iterator<Item = &RoundRecord> {
        self.rounds
            .iter()
            .filter(|r| r.phase == Phase::FairAllocation)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// The building's cost of holding `setpoint_c` during round `index`.
pub fn round_energy_cost(
    config: &SessionConfig,
    index: usize,
    setpoint_c: i32,
) -> Result<f64, SimError> {
    match &config.cost_table {
        Some(table) => {
            let row = table
                .for_round(index)
                .ok_or_else(|| SimError::InvalidScenario {
                    field: "session.cost_table".into(),
                    message: "has no rows".into(),
                })?;
            row.by_setpoint
                .get(&setpoint_c)
                .copied()
                .ok_or_else(|| SimError::InvalidScenario {
                    field: "session.cost_table".into(),
                    message: format!("round {} has no cost for {setpoint_c} C", row.round),
                })
        }
        None => Ok(setpoint_cost(
            setpoint_c,
            &config.weather_for(index),
            &config.energy,
        )),
    }
}

/// Random streams: 0 builds the true priors, 1 draws the reports. Reports
/// use one uniform per occupant per round whatever the policy, so policies
/// run on the same seed see common random numbers.
fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut priors = ChaCha8Rng::seed_from_u64(seed);
    priors.set_stream(0);
    let mut reports = ChaCha8Rng::seed_from_u64(seed);
    reports.set_stream(1);
    (priors, reports)
}

/// Drive a session with truthful synthetic occupants.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<SessionResult, SimError> {
    Ok(run_with_session(spec)?.0)
}

/// [`run_scenario`], also returning the session it drove (none for the
/// fixed baseline).
pub fn run_with_session(spec: &ScenarioSpec) -> Result<(SessionResult, Option<Session>), SimError> {
    spec.validate()?;
    let table = ValuationTable::default();
    let occupants = spec.session.occupancy.clone();
    let (mut prior_rng, mut report_rng) = streams(spec.seed);
    let true_priors = spec
        .priors
        .generate(&occupants, spec.session.bounds(), &mut prior_rng)?;

    let mut driven = None;
    let rounds = match spec.policy {
        Policy::FixedSetpoint { setpoint_c } => {
            let mut records = Vec::with_capacity(spec.rounds);
            for index in 0..spec.rounds {
                let types =
                    sample_profile(&true_priors, &occupants, setpoint_c, &mut report_rng)?.types();
                let outcome = Outcome::relative_to(setpoint_c, OutcomeKind::Stay);
                let net_benefits: Vec<f64> = types
                    .iter()
                    .map(|t| table.value(*t, OutcomeKind::Stay))
                    .collect();
                let sum_valuations = net_benefits.iter().sum();
                records.push(RoundRecord {
                    index,
                    phase: spec.phase_of(index),
                    t0_c: setpoint_c,
                    feasible: vec![OutcomeKind::Stay],
                    costs: None,
                    types,
                    outcome,
                    welfare: WelfareBreakdown {
                        sum_valuations,
                        incremental_cost: 0.0,
                        welfare: sum_valuations,
                    },
                    energy_cost: round_energy_cost(&spec.session, index, setpoint_c)?,
                    payments: None,
                    net_benefits,
                });
            }
            records
        }
        Policy::Generalized | Policy::StandardAgv => {
            let mut config = spec.session.clone();
            config.payment_rule = if spec.policy == Policy::Generalized {
                PaymentRule::Generalized
            } else {
                PaymentRule::StandardAgv
            };
            config.round_length_ms = ROUND_MS;
            config.seed = spec.seed;
            let clock = LogicalClock::new(0);
            let mut session = Session::create(spec.name.clone(), config, clock.now_ms())?;
            let mut records = Vec::with_capacity(spec.rounds);
            for index in 0..spec.rounds {
                session.open_round(clock.now_ms())?;
                let t0_c = session.t0_c();
                let profile = sample_profile(&true_priors, &occupants, t0_c, &mut report_rng)?;
                for (o, t) in profile.reports() {
                    session.submit_report(o, *t, clock.now_ms())?;
                }
                clock.advance(ROUND_MS);
                let decision = session.close_round(clock.now_ms())?.clone();
                let round = session.current_round().expect("decided round");
                let types = profile.types();
                let net_benefits = types
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let paid = decision.payments.as_ref().map_or(0.0, |p| p[i]);
                        table.value(*t, decision.outcome.kind) - paid
                    })
                    .collect();
                records.push(RoundRecord {
                    index,
                    phase: round.phase,
                    t0_c,
                    feasible: round.feasible(),
                    costs: Some(round.costs.clone()),
                    types,
                    outcome: decision.outcome,
                    welfare: decision.welfare,
                    energy_cost: round
                        .costs
                        .absolute(decision.outcome.kind)
                        .expect("decided outcome is feasible"),
                    payments: decision.payments,
                    net_benefits,
                });
            }
            driven = Some(session);
            records
        }
    };

    let result = SessionResult {
        name: spec.name.clone(),
        policy: spec.policy,
        seed: spec.seed,
        config_hash: spec.config_hash(),
        generator: spec.priors.clone(),
        true_priors,
        aggregates: Aggregates::from_rounds(&occupants, &rounds),
        occupants,
        rounds,
    };
    Ok((result, driven))
}
