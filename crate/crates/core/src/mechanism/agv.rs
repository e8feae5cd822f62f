use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    ComfortType, MechanismError, MechanismParams, Outcome, OutcomeKind, TypeDistribution,
    ValuationTable, TYPE_COUNT,
};
use crate::energy::CostVector;
use crate::money;

/// Welfare values closer than this are treated as tied.
pub const WELFARE_TIE_TOLERANCE: f64 = 1e-12;

/// Largest joint type space enumerated exactly.
pub const EXHAUSTIVE_LIMIT: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfareBreakdown {
    #[serde(with = "money::decimal")]
    pub sum_valuations: f64,
    #[serde(with = "money::decimal")]
    pub incremental_cost: f64,
    #[serde(with = "money::decimal")]
    pub welfare: f64,
}

/// Per-occupant transfers; positive means the occupant pays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PaymentVector(#[serde(with = "money::decimal_vec")] pub Vec<f64>);

impl PaymentVector {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for PaymentVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// How expectations over the joint type space are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExpectationMode {
    Exhaustive,
    MonteCarlo { samples: usize, seed: u64 },
}

impl ExpectationMode {
    pub const DEFAULT_SAMPLES: usize = 100_000;

    /// Exhaustive when `9^n` fits the enumeration budget, sampled otherwise.
    pub fn auto(n: usize, seed: u64) -> Self {
        match profile_count(n) {
            Some(c) if c <= EXHAUSTIVE_LIMIT => ExpectationMode::Exhaustive,
            _ => ExpectationMode::MonteCarlo {
                samples: Self::DEFAULT_SAMPLES,
                seed,
            },
        }
    }
}

/// `9^n`, or `None` on overflow.
pub fn profile_count(n: usize) -> Option<usize> {
    TYPE_COUNT.checked_pow(n as u32)
}

/// Visit every joint profile of `n` occupants as type indices (0..9), in
/// lexicographic order with the last occupant varying fastest.
pub fn for_each_profile(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; n];
    loop {
        visit(&idx);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < TYPE_COUNT {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Precomputed welfare argmax over a round's feasible outcomes.
#[derive(Clone, Debug)]
pub(crate) struct OutcomeSelector {
    feasible: [bool; 3],
    incremental: [f64; 3],
    t0_c: i32,
}

impl OutcomeSelector {
    pub(crate) fn new(costs: &CostVector) -> Result<Self, MechanismError> {
        if costs.entries.is_empty() {
            return Err(MechanismError::EmptyFeasibleSet);
        }
        let mut feasible = [false; 3];
        let mut incremental = [0.0; 3];
        for e in &costs.entries {
            feasible[e.kind.column()] = true;
            incremental[e.kind.column()] = e.incremental_usd;
        }
        Ok(Self {
            feasible,
            incremental,
            t0_c: costs.t0_c,
        })
    }

    pub(crate) fn incremental(&self, kind: OutcomeKind) -> f64 {
        self.incremental[kind.column()]
    }

    /// Argmax of `sums[k] - dC(k)`; ties go to lower cost, then
    /// Stay, Cooler, Warmer.
    pub(crate) fn choose(&self, sums: &[f64; 3]) -> OutcomeKind {
        let mut best: Option<(OutcomeKind, f64)> = None;
        for kind in OutcomeKind::ALL {
            let c = kind.column();
            if !self.feasible[c] {
                continue;
            }
            let w = sums[c] - self.incremental[c];
            best = match best {
                None => Some((kind, w)),
                Some((bk, bw)) => {
                    let replace = if w > bw + WELFARE_TIE_TOLERANCE {
                        true
                    } else if w < bw - WELFARE_TIE_TOLERANCE {
                        false
                    } else {
                        let (dc, bdc) = (self.incremental[c], self.incremental[bk.column()]);
                        if dc != bdc {
                            dc < bdc
                        } else {
                            kind.tie_rank() < bk.tie_rank()
                        }
                    };
                    if replace {
                        Some((kind, w))
                    } else {
                        Some((bk, bw))
                    }
                }
            };
        }
        best.expect("selector has a feasible outcome").0
    }

    pub(crate) fn choose_for(&self, table: &ValuationTable, types: &[ComfortType]) -> OutcomeKind {
        self.choose(&valuation_sums(table, types.iter().map(|t| t.index())))
    }

    pub(crate) fn outcome(&self, kind: OutcomeKind) -> Outcome {
        Outcome::relative_to(self.t0_c, kind)
    }
}

fn valuation_sums(table: &ValuationTable, types: impl Iterator<Item = usize>) -> [f64; 3] {
    let mut sums = [0.0; 3];
    for t in types {
        let row = table.row(ComfortType::from_index(t));
        for k in 0..3 {
            sums[k] += row[k];
        }
    }
    sums
}

pub fn valuation(table: &ValuationTable, t: ComfortType, outcome: Outcome) -> f64 {
    table.value(t, outcome.kind)
}

pub fn welfare(
    types: &[ComfortType],
    outcome: Outcome,
    costs: &CostVector,
    table: &ValuationTable,
) -> Result<WelfareBreakdown, MechanismError> {
    let incremental_cost = costs
        .incremental(outcome.kind)
        .ok_or(MechanismError::OutcomeNotFeasible(outcome.kind))?;
    let sum_valuations: f64 = types.iter().map(|t| table.value(*t, outcome.kind)).sum();
    Ok(WelfareBreakdown {
        sum_valuations,
        incremental_cost,
        welfare: sum_valuations - incremental_cost,
    })
}

/// The welfare-maximizing feasible outcome for the reported types.
pub fn select_outcome(
    types: &[ComfortType],
    costs: &CostVector,
    table: &ValuationTable,
) -> Result<Outcome, MechanismError> {
    let selector = OutcomeSelector::new(costs)?;
    Ok(selector.outcome(selector.choose_for(table, types)))
}

pub fn net_benefit(
    types: &[ComfortType],
    outcome: Outcome,
    payments: &PaymentVector,
    table: &ValuationTable,
) -> Vec<f64> {
    types
        .iter()
        .zip(&payments.0)
        .map(|(t, pay)| table.value(*t, outcome.kind) - pay)
        .collect()
}

/// Expected externality components for every occupant and every type they
/// could report.
///
/// `value_part[i][t]` is the expected total valuation of the others when `i`
/// reports `t`, and `cost_part[i][t]` the expected incremental cost. The
/// cost-adjusted externality is `value_part - (sum_{j != i} alpha_j) * cost_part`,
/// so these tables do not depend on the mechanism parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalityTables {
    pub value_part: Vec<[f64; TYPE_COUNT]>,
    pub cost_part: Vec<[f64; TYPE_COUNT]>,
    pub mode: ExpectationMode,
}

impl ExternalityTables {
    pub fn compute(
        priors: &[TypeDistribution],
        costs: &CostVector,
        table: &ValuationTable,
        mode: ExpectationMode,
    ) -> Result<Self, MechanismError> {
        let selector = OutcomeSelector::new(costs)?;
        match mode {
            ExpectationMode::Exhaustive => Self::exhaustive(priors, &selector, table),
            ExpectationMode::MonteCarlo { samples, seed } => {
                Ok(Self::sampled(priors, &selector, table, samples, seed))
            }
        }
    }

    pub(crate) fn exhaustive(
        priors: &[TypeDistribution],
        selector: &OutcomeSelector,
        table: &ValuationTable,
    ) -> Result<Self, MechanismError> {
        let n = priors.len();
        match profile_count(n) {
            Some(c) if c <= EXHAUSTIVE_LIMIT => {}
            _ => return Err(MechanismError::StateSpaceOverflow { n }),
        }
        let mut value_part = vec![[0.0; TYPE_COUNT]; n];
        let mut cost_part = vec![[0.0; TYPE_COUNT]; n];
        let mut prefix = vec![1.0; n + 1];
        let mut suffix = vec![1.0; n + 1];
        for_each_profile(n, |idx| {
            for k in 0..n {
                prefix[k + 1] = prefix[k] * priors[k].probs()[idx[k]];
            }
            for k in (0..n).rev() {
                suffix[k] = suffix[k + 1] * priors[k].probs()[idx[k]];
            }
            let sums = valuation_sums(table, idx.iter().copied());
            let kind = selector.choose(&sums);
            let dc = selector.incremental(kind);
            let total = sums[kind.column()];
            for j in 0..n {
                let p_others = prefix[j] * suffix[j + 1];
                if p_others == 0.0 {
                    continue;
                }
                let own = table.value(ComfortType::from_index(idx[j]), kind);
                value_part[j][idx[j]] += p_others * (total - own);
                cost_part[j][idx[j]] += p_others * dc;
            }
        });
        Ok(Self {
            value_part,
            cost_part,
            mode: ExpectationMode::Exhaustive,
        })
    }

    /// Monte Carlo estimate: for each occupant, `samples` draws of the others'
    /// types, shared across the nine candidate reports.
    pub(crate) fn sampled(
        priors: &[TypeDistribution],
        selector: &OutcomeSelector,
        table: &ValuationTable,
        samples: usize,
        seed: u64,
    ) -> Self {
        let n = priors.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut value_part = vec![[0.0; TYPE_COUNT]; n];
        let mut cost_part = vec![[0.0; TYPE_COUNT]; n];
        let rows: Vec<[f64; 3]> = ComfortType::ALL.iter().map(|t| table.row(*t)).collect();
        let samples = samples.max(1);
        for j in 0..n {
            for _ in 0..samples {
                let mut others = [0.0; 3];
                for (k, prior) in priors.iter().enumerate() {
                    if k == j {
                        continue;
                    }
                    let t = prior.sample_with(rng.random::<f64>());
                    for c in 0..3 {
                        others[c] += rows[t.index()][c];
                    }
                }
                for t in 0..TYPE_COUNT {
                    let sums = [
                        others[0] + rows[t][0],
                        others[1] + rows[t][1],
                        others[2] + rows[t][2],
                    ];
                    let kind = selector.choose(&sums);
                    value_part[j][t] += others[kind.column()];
                    cost_part[j][t] += selector.incremental(kind);
                }
            }
            for t in 0..TYPE_COUNT {
                value_part[j][t] /= samples as f64;
                cost_part[j][t] /= samples as f64;
            }
        }
        Self {
            value_part,
            cost_part,
            mode: ExpectationMode::MonteCarlo { samples, seed },
        }
    }

    pub fn n(&self) -> usize {
        self.value_part.len()
    }

    /// Cost-adjusted expected externality of occupant `i` reporting `t`.
    pub fn externality(&self, i: usize, t: ComfortType, alpha: &[f64]) -> f64 {
        let others: f64 = alpha.iter().sum::<f64>() - alpha[i];
        self.value_part[i][t.index()] - others * self.cost_part[i][t.index()]
    }
}

/// Outcome, welfare and payments for one reported profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub outcome: Outcome,
    pub welfare: WelfareBreakdown,
    pub payments: PaymentVector,
}

impl Settlement {
    pub fn net_benefits(&self, types: &[ComfortType], table: &ValuationTable) -> Vec<f64> {
        net_benefit(types, self.outcome, &self.payments, table)
    }
}

/// A generalized AGV mechanism bound to one round's priors, costs and
/// parameters.
#[derive(Clone, Debug)]
pub struct AgvMechanism {
    table: ValuationTable,
    costs: CostVector,
    selector: OutcomeSelector,
    params: MechanismParams,
    tables: ExternalityTables,
}

impl AgvMechanism {
    pub fn new(
        priors: &[TypeDistribution],
        costs: &CostVector,
        table: &ValuationTable,
        params: MechanismParams,
        mode: ExpectationMode,
    ) -> Result<Self, MechanismError> {
        params.validate()?;
        Self::new_unchecked(priors, costs, table, params, mode)
    }

    /// Skips parameter validation; budget balance is then not guaranteed.
    pub fn new_unchecked(
        priors: &[TypeDistribution],
        costs: &CostVector,
        table: &ValuationTable,
        params: MechanismParams,
        mode: ExpectationMode,
    ) -> Result<Self, MechanismError> {
        check_dims(priors.len(), &params)?;
        let tables = ExternalityTables::compute(priors, costs, table, mode)?;
        Self::from_tables_unchecked(tables, costs, table, params)
    }

    pub fn from_tables(
        tables: ExternalityTables,
        costs: &CostVector,
        table: &ValuationTable,
        params: MechanismParams,
    ) -> Result<Self, MechanismError> {
        params.validate()?;
        Self::from_tables_unchecked(tables, costs, table, params)
    }

    pub fn from_tables_unchecked(
        tables: ExternalityTables,
        costs: &CostVector,
        table: &ValuationTable,
        params: MechanismParams,
    ) -> Result<Self, MechanismError> {
        check_dims(tables.n(), &params)?;
        Ok(Self {
            table: *table,
            costs: costs.clone(),
            selector: OutcomeSelector::new(costs)?,
            params,
            tables,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn params(&self) -> &MechanismParams {
        &self.params
    }

    pub fn tables(&self) -> &ExternalityTables {
        &self.tables
    }

    pub fn costs(&self) -> &CostVector {
        &self.costs
    }

    pub fn expected_externality(&self, i: usize, t: ComfortType) -> f64 {
        self.tables.externality(i, t, &self.params.alpha)
    }

    pub fn select(&self, types: &[ComfortType]) -> Outcome {
        self.selector
            .outcome(self.selector.choose_for(&self.table, types))
    }

    /// Occupant `i`'s payment when `types` are reported and `outcome` is
    /// chosen. `types` must have one entry per occupant.
    pub fn payment(&self, i: usize, types: &[ComfortType], outcome: Outcome) -> f64 {
        let redistributed: f64 = types
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, t)| self.params.beta[i][j] * self.expected_externality(j, *t))
            .sum();
        self.params.alpha[i] * self.selector.incremental(outcome.kind)
            - self.expected_externality(i, types[i])
            + redistributed
    }

    pub fn settle(&self, types: &[ComfortType]) -> Result<Settlement, MechanismError> {
        let n = self.n();
        if types.len() != n {
            return Err(MechanismError::PriorMismatch {
                expected: types.len(),
                found: n,
            });
        }
        let outcome = self.select(types);
        let welfare = welfare(types, outcome, &self.costs, &self.table)?;
        let dc = welfare.incremental_cost;
        let psi: Vec<f64> = types
            .iter()
            .enumerate()
            .map(|(i, t)| self.expected_externality(i, *t))
            .collect();
        let payments = (0..n)
            .map(|i| {
                let redistributed: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.params.beta[i][j] * psi[j])
                    .sum();
                self.params.alpha[i] * dc - psi[i] + redistributed
            })
            .collect();
        Ok(Settlement {
            outcome,
            welfare,
            payments: PaymentVector(payments),
        })
    }
}

fn check_dims(n: usize, params: &MechanismParams) -> Result<(), MechanismError> {
    if n == 0 {
        return Err(MechanismError::EmptyProfile);
    }
    if params.n() != n || params.beta.len() != n || params.beta.iter().any(|r| r.len() != n) {
        return Err(MechanismError::ConstraintViolation(format!(
            "parameters are sized for {} occupants, expected {n}",
            params.n()
        )));
    }
    Ok(())
}

fn check_priors(types: usize, priors: usize) -> Result<(), MechanismError> {
    if types != priors {
        return Err(MechanismError::PriorMismatch {
            expected: types,
            found: priors,
        });
    }
    Ok(())
}

/// Expected externality `psi_i(type_i)` under the given parameters.
pub fn expected_externality(
    i: usize,
    type_i: ComfortType,
    priors: &[TypeDistribution],
    params: &MechanismParams,
    costs: &CostVector,
    table: &ValuationTable,
    mode: ExpectationMode,
) -> Result<f64, MechanismError> {
    if i >= priors.len() {
        return Err(MechanismError::PriorMismatch {
            expected: i + 1,
            found: priors.len(),
        });
    }
    params.validate()?;
    check_dims(priors.len(), params)?;
    let tables = ExternalityTables::compute(priors, costs, table, mode)?;
    Ok(tables.externality(i, type_i, &params.alpha))
}

pub fn agv_payment_generalized(
    types: &[ComfortType],
    priors: &[TypeDistribution],
    costs: &CostVector,
    table: &ValuationTable,
    params: &MechanismParams,
    mode: ExpectationMode,
) -> Result<PaymentVector, MechanismError> {
    check_priors(types.len(), priors.len())?;
    let mechanism = AgvMechanism::new(priors, costs, table, params.clone(), mode)?;
    Ok(mechanism.settle(types)?.payments)
}

/// Generalized payments at equal shares `alpha_i = 1/n`, `beta_ij = 1/(n-1)`.
pub fn agv_payment_standard(
    types: &[ComfortType],
    priors: &[TypeDistribution],
    costs: &CostVector,
    table: &ValuationTable,
    mode: ExpectationMode,
) -> Result<PaymentVector, MechanismError> {
    if types.len() < 2 {
        return Err(MechanismError::DegenerateGroup);
    }
    agv_payment_generalized(
        types,
        priors,
        costs,
        table,
        &MechanismParams::standard(types.len()),
        mode,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: u8) -> ComfortType {
        ComfortType::new(id).unwrap()
    }

    fn flat_costs(dc: f64) -> CostVector {
        CostVector::uniform(24, dc)
    }

    #[test]
    fn welfare_examples() {
        let table = ValuationTable::default();
        let stay = Outcome::relative_to(24, OutcomeKind::Stay);
        let w = welfare(&[t(4); 5], stay, &flat_costs(0.10), &table).unwrap();
        assert!((w.welfare - 1.90).abs() < 1e-12);
        assert_eq!(w.welfare, w.sum_valuations - w.incremental_cost);

        let warmer = Outcome::relative_to(24, OutcomeKind::Warmer);
        let w = welfare(&[t(5)], warmer, &flat_costs(0.0), &table).unwrap();
        assert!((w.welfare + 0.20).abs() < 1e-15);

        for kind in OutcomeKind::ALL {
            let w = welfare(
                &[t(1), t(7)],
                Outcome::relative_to(24, kind),
                &flat_costs(0.0),
                &table,
            )
            .unwrap();
            assert_eq!(w.welfare, 0.0);
        }
    }

    #[test]
    fn welfare_rejects_infeasible_outcome() {
        let costs = CostVector::from_incremental(
            26,
            &[(OutcomeKind::Cooler, 0.01), (OutcomeKind::Stay, 0.0)],
        )
        .unwrap();
        let err = welfare(
            &[t(1)],
            Outcome::relative_to(26, OutcomeKind::Warmer),
            &costs,
            &ValuationTable::default(),
        )
        .unwrap_err();
        assert_eq!(err, MechanismError::OutcomeNotFeasible(OutcomeKind::Warmer));
    }

    #[test]
    fn select_examples() {
        let table = ValuationTable::default();
        let x = select_outcome(&[t(9)], &flat_costs(0.05), &table).unwrap();
        assert_eq!(x.kind, OutcomeKind::Warmer);
        assert_eq!(x.setpoint_c, 25);

        let costs = CostVector::from_incremental(
            24,
            &[
                (OutcomeKind::Cooler, -0.01),
                (OutcomeKind::Stay, 0.0),
                (OutcomeKind::Warmer, 0.01),
            ],
        )
        .unwrap();
        assert_eq!(
            select_outcome(&[], &costs, &table).unwrap().kind,
            OutcomeKind::Cooler
        );
    }

    #[test]
    fn ties_prefer_cheaper_then_stay() {
        let table = ValuationTable::default();
        // cooler(1) + warmer(1) value every outcome at 0.
        let x = select_outcome(&[t(1), t(7)], &flat_costs(0.0), &table).unwrap();
        assert_eq!(x.kind, OutcomeKind::Stay);
        // Cooler and Warmer tie on welfare for {cooler(2), warmer(2)}: 0.2 each; Stay is 0.
        let x = select_outcome(&[t(2), t(8)], &flat_costs(0.0), &table).unwrap();
        assert_eq!(x.kind, OutcomeKind::Cooler);
        // Equal welfare, cheaper outcome wins.
        let costs = CostVector::from_incremental(
            24,
            &[
                (OutcomeKind::Cooler, 0.0),
                (OutcomeKind::Stay, 0.0),
                (OutcomeKind::Warmer, 0.0),
            ],
        )
        .unwrap();
        assert_eq!(
            select_outcome(&[], &costs, &table).unwrap().kind,
            OutcomeKind::Stay
        );
    }

    #[test]
    fn single_occupant_pays_the_whole_increment() {
        let table = ValuationTable::default();
        let costs = flat_costs(0.03);
        let priors = [TypeDistribution::uniform()];
        let params = MechanismParams::standard(1);
        let pay = agv_payment_generalized(
            &[t(5)],
            &priors,
            &costs,
            &table,
            &params,
            ExpectationMode::Exhaustive,
        )
        .unwrap();
        assert_eq!(pay.0, vec![0.03]);
        let psi = expected_externality(
            0,
            t(3),
            &priors,
            &params,
            &costs,
            &table,
            ExpectationMode::Exhaustive,
        )
        .unwrap();
        assert_eq!(psi, 0.0);
        assert_eq!(
            agv_payment_standard(
                &[t(5)],
                &priors,
                &costs,
                &table,
                ExpectationMode::Exhaustive
            ),
            Err(MechanismError::DegenerateGroup)
        );
    }

    #[test]
    fn point_mass_opponent_gives_realized_externality() {
        let table = ValuationTable::default();
        let costs = CostVector::from_incremental(
            24,
            &[
                (OutcomeKind::Cooler, 0.05),
                (OutcomeKind::Stay, 0.0),
                (OutcomeKind::Warmer, -0.03),
            ],
        )
        .unwrap();
        let params =
            MechanismParams::new(vec![0.3, 0.7], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let priors = [
            TypeDistribution::uniform(),
            TypeDistribution::point_mass(t(8)),
        ];
        for own in ComfortType::ALL {
            let psi = expected_externality(
                0,
                own,
                &priors,
                &params,
                &costs,
                &table,
                ExpectationMode::Exhaustive,
            )
            .unwrap();
            let x = select_outcome(&[own, t(8)], &costs, &table).unwrap();
            let expected = table.value(t(8), x.kind) - 0.7 * costs.incremental(x.kind).unwrap();
            assert!((psi - expected).abs() < 1e-15, "{own}: {psi} vs {expected}");
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let table = ValuationTable::default();
        let mut params = MechanismParams::standard(2);
        params.beta[0][1] = 1.5;
        let err = agv_payment_generalized(
            &[t(1), t(2)],
            &[TypeDistribution::uniform(); 2],
            &flat_costs(0.0),
            &table,
            &params,
            ExpectationMode::Exhaustive,
        )
        .unwrap_err();
        assert!(matches!(err, MechanismError::ConstraintViolation(_)));
    }

    #[test]
    fn mismatched_priors_are_rejected() {
        let err = agv_payment_standard(
            &[t(1), t(2), t(3)],
            &[TypeDistribution::uniform(); 2],
            &flat_costs(0.0),
            &ValuationTable::default(),
            ExpectationMode::Exhaustive,
        )
        .unwrap_err();
        assert!(matches!(err, MechanismError::PriorMismatch { .. }));
    }

    #[test]
    fn net_benefit_examples() {
        let table = ValuationTable::default();
        let stay = Outcome::relative_to(24, OutcomeKind::Stay);
        // u = (0.4, 0) for types 4 and 1 at Stay.
        let pi = net_benefit(&[t(4), t(1)], stay, &PaymentVector(vec![0.3, -0.2]), &table);
        assert!((pi[0] - 0.1).abs() < 1e-15 && (pi[1] - 0.2).abs() < 1e-15);
        let pi = net_benefit(&[t(4), t(1)], stay, &PaymentVector(vec![0.0, 0.0]), &table);
        assert_eq!(pi, vec![0.4, 0.0]);
    }

    #[test]
    fn profile_enumeration_order() {
        let mut seen = Vec::new();
        for_each_profile(2, |idx| seen.push((idx[0], idx[1])));
        assert_eq!(seen.len(), 81);
        assert_eq!(seen[0], (0, 0));
        assert_eq!(seen[1], (0, 1));
        assert_eq!(seen[80], (8, 8));
        let mut count = 0;
        for_each_profile(0, |_| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn auto_mode_switches_above_six() {
        assert_eq!(ExpectationMode::auto(6, 1), ExpectationMode::Exhaustive);
        assert!(matches!(
            ExpectationMode::auto(7, 1),
            ExpectationMode::MonteCarlo { .. }
        ));
    }
}
