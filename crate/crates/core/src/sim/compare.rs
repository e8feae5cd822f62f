use serde::{Deserialize, Serialize};

use super::{run_scenario, Policy, ScenarioSpec, SessionResult, SimError};
use crate::energy::EnergyModelConfig;
use crate::fairness::{spread, FairnessProblem, SolverStatus};
use crate::mechanism::ValuationTable;
use crate::money;

/// One seed's generalized session against the fixed baseline, over the
/// allocation rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub seed: u64,
    pub rounds: usize,
    #[serde(with = "money::decimal")]
    pub generalized_cost: f64,
    #[serde(with = "money::decimal")]
    pub fixed_cost: f64,
    /// Percent of the fixed baseline's cost saved.
    pub saving_pct: f64,
    #[serde(with = "money::decimal")]
    pub generalized_comfort: f64,
    #[serde(with = "money::decimal")]
    pub fixed_comfort: f64,
    pub mean_setpoint_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub scenario: String,
    pub fixed_setpoint_c: i32,
    pub groups: Vec<GroupComparison>,
    pub mean_saving_pct: f64,
}

fn allocation_totals(result: &SessionResult) -> (usize, f64, f64, f64) {
    let rounds: Vec<_> = result.allocation_rounds().collect();
    let m = rounds.len();
    let cost = rounds.iter().map(|r| r.energy_cost).sum();
    let comfort = rounds.iter().map(|r| r.welfare.sum_valuations).sum::<f64>() / m.max(1) as f64;
    let setpoint = rounds
        .iter()
        .map(|r| r.outcome.setpoint_c as f64)
        .sum::<f64>()
        / m.max(1) as f64;
    (m, cost, comfort, setpoint)
}

/// Compare the generalized policy with a fixed set-point on each seed.
/// Both runs of a seed share weather and report draws.
pub fn baseline_compare(spec: &ScenarioSpec, seeds: &[u64]) -> Result<BaselineReport, SimError> {
    let fixed = Policy::FixedSetpoint {
        setpoint_c: spec.baseline_setpoint_c,
    };
    let mut groups = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let base = spec.with_seed(seed);
        let generalized = run_scenario(&base.with_policy(Policy::Generalized))?;
        let baseline = run_scenario(&base.with_policy(fixed))?;
        let (m, generalized_cost, generalized_comfort, mean_setpoint_c) =
            allocation_totals(&generalized);
        let (mf, fixed_cost, fixed_comfort, _) = allocation_totals(&baseline);
        if m != mf || m == 0 {
            return Err(SimError::RoundMismatch {
                seed,
                generalized: m,
                fixed: mf,
            });
        }
        let saving_pct = if fixed_cost > 0.0 {
            100.0 * (fixed_cost - generalized_cost) / fixed_cost
        } else {
            0.0
        };
        groups.push(GroupComparison {
            seed,
            rounds: m,
            generalized_cost,
            fixed_cost,
            saving_pct,
            generalized_comfort,
            fixed_comfort,
            mean_setpoint_c,
        });
    }
    let mean_saving_pct =
        groups.iter().map(|g| g.saving_pct).sum::<f64>() / groups.len().max(1) as f64;
    Ok(BaselineReport {
        scenario: spec.name.clone(),
        fixed_setpoint_c: spec.baseline_setpoint_c,
        groups,
        mean_saving_pct,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub price_per_kwh: f64,
    pub status: SolverStatus,
    /// Present when expected net benefits could be equalized.
    pub common_benefit: Option<f64>,
    pub exante_benefits: Vec<f64>,
    pub spread: f64,
    pub standard_benefits: Vec<f64>,
    pub standard_spread: f64,
    pub sum_variance: f64,
    pub baseline_sum_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSweep {
    pub problem: String,
    pub points: Vec<PricePoint>,
}

impl PriceSweep {
    /// Whether the common benefit never rises along the grid, allowing
    /// `tolerance` of numerical slack.
    pub fn is_non_increasing(&self, tolerance: f64) -> bool {
        let values: Vec<f64> = self
            .points
            .iter()
            .filter_map(|p| p.common_benefit)
            .collect();
        values.len() == self.points.len() && values.windows(2).all(|w| w[1] <= w[0] + tolerance)
    }
}

/// `count` evenly spaced prices from `lo` to `hi` inclusive.
pub fn price_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Re-optimize fairness at each electricity price. Manual costs are taken
/// to be quoted at the default tariff and scale proportionally.
pub fn price_sweep(
    problem: &FairnessProblem,
    prices: &[f64],
    seed: u64,
) -> Result<PriceSweep, SimError> {
    if prices.windows(2).any(|w| w[0].is_nan() || w[0] > w[1]) {
        return Err(SimError::InvalidScenario {
            field: "prices".into(),
            message: "grid must be sorted ascending".into(),
        });
    }
    if let Some(bad) = prices.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(SimError::InvalidScenario {
            field: "prices".into(),
            message: format!("price {bad} must be finite and >= 0"),
        });
    }
    let table = ValuationTable::default();
    let reference = EnergyModelConfig::default().price_per_kwh;
    let mut points = Vec::with_capacity(prices.len());
    for &price in prices {
        let scaled = FairnessProblem {
            costs: problem.costs.at_price(price, reference),
            ..problem.clone()
        };
        let solution = scaled.solve(&table, seed)?;
        points.push(PricePoint {
            price_per_kwh: price,
            status: solution.solver_status,
            common_benefit: solution.common_benefit(),
            spread: spread(&solution.exante_benefits),
            standard_spread: spread(&solution.baseline_exante_benefits),
            exante_benefits: solution.exante_benefits,
            standard_benefits: solution.baseline_exante_benefits,
            sum_variance: solution.sum_variance,
            baseline_sum_variance: solution.baseline_sum_variance,
        });
    }
    Ok(PriceSweep {
        problem: problem.name.clone(),
        points,
    })
}
