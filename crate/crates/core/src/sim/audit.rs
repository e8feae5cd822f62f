use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{run_with_session, ScenarioSpec, SessionResult, SimError};
use crate::energy::CostVector;
use crate::mechanism::{
    for_each_profile, profile_count, welfare, AgvMechanism, ComfortType, ExpectationMode,
    MechanismParams, OccupantId, Outcome, TypeDistribution, ValuationTable, TYPE_COUNT,
};
use crate::session::{PaymentRule, Phase};

/// Gains from misreporting below this are rounding noise.
pub const IC_TOLERANCE: f64 = 1e-9;
pub const BUDGET_TOLERANCE: f64 = 1e-9;
/// Sampled gains count as violations beyond this many standard errors.
pub const SAMPLED_Z: f64 = 3.0;
/// Largest opponent profile space enumerated exhaustively.
pub const EXHAUSTIVE_OPPONENT_LIMIT: usize = 9 * 9 * 9 * 9 * 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "depth", rename_all = "snake_case")]
pub enum AuditDepth {
    Exhaustive,
    /// Opponent profiles sampled once per occupant and shared by every
    /// (true type, report) pair.
    Sampled {
        samples: usize,
        seed: u64,
    },
}

impl AuditDepth {
    /// Exhaustive up to three occupants, sampled beyond.
    pub fn auto(n: usize, samples: usize, seed: u64) -> Self {
        if n <= 3 {
            AuditDepth::Exhaustive
        } else {
            AuditDepth::Sampled { samples, seed }
        }
    }
}

/// Interim gain of reporting `report` instead of the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub occupant: usize,
    pub truth: ComfortType,
    pub report: ComfortType,
    pub gain: f64,
    /// Zero for exhaustive audits.
    pub standard_error: f64,
}

impl Deviation {
    pub fn is_violation(&self) -> bool {
        self.gain > IC_TOLERANCE + SAMPLED_Z * self.standard_error
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcAuditReport {
    pub n: usize,
    pub depth: AuditDepth,
    pub deviations_checked: usize,
    /// Largest gain over all misreports.
    pub max_gain: f64,
    /// The deviation with the largest gain in standard errors (sampled) or
    /// absolute terms (exhaustive).
    pub worst: Option<Deviation>,
    pub violations: usize,
}

impl IcAuditReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Interim expected net benefit of one occupant for every (true type,
/// report) pair, indexed `[truth][report]`.
fn interim_exhaustive(
    mech: &AgvMechanism,
    priors: &[TypeDistribution],
    i: usize,
    table: &ValuationTable,
) -> [[f64; TYPE_COUNT]; TYPE_COUNT] {
    let n = priors.len();
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut value = [[0.0; TYPE_COUNT]; TYPE_COUNT];
    let mut types = vec![ComfortType::from_index(0); n];
    for_each_profile(n - 1, |idx| {
        let mut p = 1.0;
        for (k, &j) in others.iter().enumerate() {
            p *= priors[j].probs()[idx[k]];
            types[j] = ComfortType::from_index(idx[k]);
        }
        if p == 0.0 {
            return;
        }
        for report in ComfortType::ALL {
            types[i] = report;
            let outcome = mech.select(&types);
            let paid = mech.payment(i, &types, outcome);
            for truth in ComfortType::ALL {
                value[truth.index()][report.index()] +=
                    p * (table.value(truth, outcome.kind) - paid);
            }
        }
    });
    value
}

/// Audit Bayesian incentive compatibility of one mechanism instance.
pub fn ic_audit(
    priors: &[TypeDistribution],
    params: &MechanismParams,
    costs: &CostVector,
    table: &ValuationTable,
    depth: AuditDepth,
) -> Result<IcAuditReport, SimError> {
    let n = priors.len();
    let mode = ExpectationMode::auto(n, 0);
    let mech = AgvMechanism::new(priors, costs, table, params.clone(), mode)?;
    ic_audit_mechanism(&mech, priors, table, depth)
}

/// Audit a prepared mechanism against the priors its externalities were
/// computed from.
pub fn ic_audit_mechanism(
    mech: &AgvMechanism,
    priors: &[TypeDistribution],
    table: &ValuationTable,
    depth: AuditDepth,
) -> Result<IcAuditReport, SimError> {
    let n = priors.len();
    let mut deviations = Vec::with_capacity(n * TYPE_COUNT * (TYPE_COUNT - 1));
    match depth {
        AuditDepth::Exhaustive => {
            match profile_count(n.saturating_sub(1)) {
                Some(c) if c <= EXHAUSTIVE_OPPONENT_LIMIT => {}
                _ => {
                    return Err(SimError::InvalidScenario {
                        field: "depth".into(),
                        message: format!("{n} occupants are too many to enumerate"),
                    })
                }
            }
            for i in 0..n {
                let value = interim_exhaustive(mech, priors, i, table);
                for truth in ComfortType::ALL {
                    for report in ComfortType::ALL.into_iter().filter(|r| *r != truth) {
                        deviations.push(Deviation {
                            occupant: i,
                            truth,
                            report,
                            gain: value[truth.index()][report.index()]
                                - value[truth.index()][truth.index()],
                            standard_error: 0.0,
                        });
                    }
                }
            }
        }
        AuditDepth::Sampled { samples, seed } => {
            if samples < 2 {
                return Err(SimError::InvalidScenario {
                    field: "samples".into(),
                    message: "need at least two samples".into(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..n {
                // Gains indexed [truth][report].
                let mut sums = [[0.0; TYPE_COUNT]; TYPE_COUNT];
                let mut squares = [[0.0; TYPE_COUNT]; TYPE_COUNT];
                let mut types = vec![ComfortType::from_index(0); n];
                for _ in 0..samples {
                    for j in (0..n).filter(|&j| j != i) {
                        types[j] = priors[j].sample_with(rng.random::<f64>());
                    }
                    let mut realized = [[0.0; TYPE_COUNT]; TYPE_COUNT];
                    for report in ComfortType::ALL {
                        types[i] = report;
                        let outcome = mech.select(&types);
                        let paid = mech.payment(i, &types, outcome);
                        for truth in ComfortType::ALL {
                            realized[report.index()][truth.index()] =
                                table.value(truth, outcome.kind) - paid;
                        }
                    }
                    for truth in 0..TYPE_COUNT {
                        for report in 0..TYPE_COUNT {
                            let d = realized[report][truth] - realized[truth][truth];
                            sums[truth][report] += d;
                            squares[truth][report] += d * d;
                        }
                    }
                }
                let m = samples as f64;
                for truth in ComfortType::ALL {
                    for report in ComfortType::ALL.into_iter().filter(|r| *r != truth) {
                        let (t, r) = (truth.index(), report.index());
                        let mean = sums[t][r] / m;
                        let var = ((squares[t][r] - m * mean * mean) / (m - 1.0)).max(0.0);
                        deviations.push(Deviation {
                            occupant: i,
                            truth,
                            report,
                            gain: mean,
                            standard_error: (var / m).sqrt(),
                        });
                    }
                }
            }
        }
    }
    // Rounding noise can leave a tiny SE on misreports that change nothing.
    let score = |d: &Deviation| {
        if d.standard_error > 0.0 {
            d.gain / d.standard_error.max(IC_TOLERANCE)
        } else {
            d.gain
        }
    };
    let worst = deviations
        .iter()
        .max_by(|a, b| score(a).total_cmp(&score(b)))
        .cloned();
    Ok(IcAuditReport {
        n,
        depth,
        deviations_checked: deviations.len(),
        max_gain: deviations
            .iter()
            .map(|d| d.gain)
            .fold(f64::NEG_INFINITY, f64::max),
        violations: deviations.iter().filter(|d| d.is_violation()).count(),
        worst,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub checked: usize,
    /// Largest |sum of payments - incremental cost|.
    pub max_imbalance: f64,
    pub violations: usize,
}

impl BudgetReport {
    pub fn record(&mut self, payments_total: f64, incremental_cost: f64) {
        let gap = (payments_total - incremental_cost).abs();
        self.checked += 1;
        self.max_imbalance = self.max_imbalance.max(gap);
        if gap.is_nan() || gap >= BUDGET_TOLERANCE {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Budget balance of every paid round in a simulated session.
pub fn budget_audit(result: &SessionResult) -> BudgetReport {
    let mut report = BudgetReport::default();
    for r in &result.rounds {
        if let Some(p) = &r.payments {
            report.record(p.total(), r.welfare.incremental_cost);
        }
    }
    report
}

/// Budget balance of a mechanism over the given profiles.
pub fn budget_audit_mechanism<'a>(
    mech: &AgvMechanism,
    profiles: impl IntoIterator<Item = &'a [ComfortType]>,
) -> Result<BudgetReport, SimError> {
    let mut report = BudgetReport::default();
    for types in profiles {
        let s = mech.settle(types)?;
        report.record(s.payments.total(), s.welfare.incremental_cost);
    }
    Ok(report)
}

/// Profiles enumerated by the budget check before it switches to sampling.
pub const EXHAUSTIVE_PROFILE_LIMIT: usize = 9 * EXHAUSTIVE_OPPONENT_LIMIT;

/// IC and budget audit of one mechanism instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismAudit {
    pub params: MechanismParams,
    pub ic: IcAuditReport,
    pub budget: BudgetReport,
    /// Interim expected net benefit indexed `[occupant][truth][report]`,
    /// present for exhaustive audits.
    pub interim: Option<Vec<Vec<Vec<f64>>>>,
}

impl MechanismAudit {
    pub fn passed(&self) -> bool {
        self.ic.passed() && self.budget.passed()
    }
}

/// Audit IC at `depth` and budget balance on every profile, or on profiles
/// drawn from the priors when there are too many to enumerate.
pub fn audit_mechanism(
    mech: &AgvMechanism,
    priors: &[TypeDistribution],
    table: &ValuationTable,
    depth: AuditDepth,
    budget_samples: usize,
    seed: u64,
) -> Result<MechanismAudit, SimError> {
    let n = mech.n();
    let ic = ic_audit_mechanism(mech, priors, table, depth)?;
    let mut budget = BudgetReport::default();
    match profile_count(n) {
        Some(c) if c <= EXHAUSTIVE_PROFILE_LIMIT => {
            let mut types = vec![ComfortType::from_index(0); n];
            let mut failure = None;
            for_each_profile(n, |idx| {
                if failure.is_some() {
                    return;
                }
                for (t, &k) in types.iter_mut().zip(idx) {
                    *t = ComfortType::from_index(k);
                }
                match mech.settle(&types) {
                    Ok(s) => budget.record(s.payments.total(), s.welfare.incremental_cost),
                    Err(e) => failure = Some(e),
                }
            });
            if let Some(e) = failure {
                return Err(e.into());
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            for _ in 0..budget_samples {
                let types: Vec<ComfortType> = priors
                    .iter()
                    .map(|p| p.sample_with(rng.random::<f64>()))
                    .collect();
                let s = mech.settle(&types)?;
                budget.record(s.payments.total(), s.welfare.incremental_cost);
            }
        }
    }
    let interim = (depth == AuditDepth::Exhaustive).then(|| {
        (0..n)
            .map(|i| {
                interim_exhaustive(mech, priors, i, table)
                    .iter()
                    .map(|row| row.to_vec())
                    .collect()
            })
            .collect()
    });
    Ok(MechanismAudit {
        params: mech.params().clone(),
        ic,
        budget,
        interim,
    })
}

/// A copy of `params` whose first redistribution column sums to 1.5, for
/// checking that the budget audit notices.
pub fn corrupted_beta(params: &MechanismParams) -> MechanismParams {
    let mut beta = params.beta.clone();
    for row in beta.iter_mut() {
        row[0] *= 1.5;
    }
    MechanismParams::new_unchecked(params.alpha.clone(), beta)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub checked: usize,
    /// Largest welfare shortfall of a chosen outcome against a feasible
    /// alternative.
    pub max_shortfall: f64,
    pub violations: usize,
}

impl EfficiencyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Check every allocation round chose a welfare-maximizing outcome.
pub fn efficiency_audit(
    result: &SessionResult,
    table: &ValuationTable,
) -> Result<EfficiencyReport, SimError> {
    let mut report = EfficiencyReport::default();
    for r in result
        .rounds
        .iter()
        .filter(|r| r.phase == Phase::FairAllocation)
    {
        let Some(costs) = &r.costs else { continue };
        let chosen = welfare(&r.types, r.outcome, costs, table)?.welfare;
        let mut shortfall: f64 = 0.0;
        for kind in costs.feasible_kinds() {
            let alt = welfare(&r.types, Outcome::relative_to(r.t0_c, kind), costs, table)?.welfare;
            shortfall = shortfall.max(alt - chosen);
        }
        report.checked += 1;
        report.max_shortfall = report.max_shortfall.max(shortfall);
        if shortfall > 0.0 {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// IC audit of the mechanism a session would run at one temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAudit {
    pub t0_c: i32,
    pub occupants: Vec<OccupantId>,
    pub params: MechanismParams,
    pub report: IcAuditReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAudit {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub ic: Vec<PointAudit>,
    pub budget: BudgetReport,
    pub efficiency: EfficiencyReport,
}

impl ScenarioAudit {
    pub fn passed(&self) -> bool {
        self.budget.passed()
            && self.efficiency.passed()
            && self.ic.iter().all(|p| p.report.passed())
    }
}

/// Run a scenario, then audit its payments, its outcomes, and the
/// mechanism it ends with at every temperature point, using the learned
/// priors and the last cost vector seen at each point.
pub fn audit_scenario(spec: &ScenarioSpec, samples: usize) -> Result<ScenarioAudit, SimError> {
    let table = ValuationTable::default();
    let (result, session) = run_with_session(spec)?;
    let mut ic = Vec::new();
    if let Some(session) = session {
        let occupants = session.config().occupancy.clone();
        let n = occupants.len();
        let (lo, hi) = session.config().bounds();
        for t0_c in lo..=hi {
            let Some(round) = result
                .rounds
                .iter()
                .rev()
                .find(|r| r.t0_c == t0_c && r.costs.is_some())
            else {
                continue;
            };
            let costs = round.costs.clone().expect("filtered");
            let priors = session.state().priors_at(t0_c);
            let params = match (
                session.config().payment_rule,
                session.fairness_solution(t0_c),
            ) {
                (PaymentRule::Generalized, Some(solution)) if n > 1 => solution.params.clone(),
                _ => MechanismParams::standard(n),
            };
            let depth = AuditDepth::auto(n, samples, spec.seed ^ t0_c as u64);
            let report = ic_audit(&priors, &params, &costs, &table, depth)?;
            ic.push(PointAudit {
                t0_c,
                occupants: occupants.clone(),
                params,
                report,
            });
        }
    }
    Ok(ScenarioAudit {
        scenario: spec.name.clone(),
        config_hash: result.config_hash.clone(),
        seed: spec.seed,
        budget: budget_audit(&result),
        efficiency: efficiency_audit(&result, &table)?,
        ic,
    })
}
