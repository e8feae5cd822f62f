use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    build_moment_cache, optimize_fairness, FairnessError, FairnessSolution, MomentCache, PriorSet,
};
use crate::energy::{
    feasible_outcomes, outcome_costs, CostVector, EnergyModelConfig, WeatherSample,
};
use crate::mechanism::{ExpectationMode, OccupantId, OutcomeKind, ValuationTable};

/// Where a fairness problem's round costs come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// Incremental costs given directly; a missing outcome is infeasible.
    Manual {
        cooler: Option<f64>,
        stay: Option<f64>,
        warmer: Option<f64>,
    },
    /// Costs from the cooling-load model at a constant outdoor temperature.
    Model {
        #[serde(default)]
        energy: EnergyModelConfig,
        outdoor_c: f64,
        temp_lower: i32,
        temp_upper: i32,
    },
}

impl CostSpec {
    pub fn cost_vector(&self, t0_c: i32) -> Result<CostVector, FairnessError> {
        let invalid = |e: crate::energy::EnergyError| FairnessError::Format(e.to_string());
        match self {
            CostSpec::Manual {
                cooler,
                stay,
                warmer,
            } => {
                let given: Vec<(OutcomeKind, f64)> = [
                    (OutcomeKind::Cooler, *cooler),
                    (OutcomeKind::Stay, *stay),
                    (OutcomeKind::Warmer, *warmer),
                ]
                .into_iter()
                .filter_map(|(k, c)| c.map(|c| (k, c)))
                .collect();
                CostVector::from_incremental(t0_c, &given).map_err(invalid)
            }
            CostSpec::Model {
                energy,
                outdoor_c,
                temp_lower,
                temp_upper,
            } => {
                let bounds = (*temp_lower, *temp_upper);
                energy.validate(bounds).map_err(invalid)?;
                let feasible = feasible_outcomes(t0_c, bounds);
                outcome_costs(
                    t0_c,
                    &feasible,
                    &WeatherSample::constant(*outdoor_c),
                    energy,
                )
                .map_err(invalid)
            }
        }
    }

    /// The same spec at a different electricity price. Manual costs scale
    /// proportionally to `price / reference_price`.
    pub fn at_price(&self, price_per_kwh: f64, reference_price: f64) -> Self {
        match self {
            CostSpec::Manual {
                cooler,
                stay,
                warmer,
            } => {
                let f = price_per_kwh / reference_price;
                CostSpec::Manual {
                    cooler: cooler.map(|c| c * f),
                    stay: stay.map(|c| c * f),
                    warmer: warmer.map(|c| c * f),
                }
            }
            CostSpec::Model {
                energy,
                outdoor_c,
                temp_lower,
                temp_upper,
            } => CostSpec::Model {
                energy: energy.with_price(price_per_kwh),
                outdoor_c: *outdoor_c,
                temp_lower: *temp_lower,
                temp_upper: *temp_upper,
            },
        }
    }
}

/// A self-contained fairness instance: occupants, their priors at one
/// temperature, and that round's costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessProblem {
    #[serde(default)]
    pub name: String,
    pub occupants: Vec<OccupantId>,
    pub t0_c: i32,
    pub costs: CostSpec,
    pub priors: PriorSet,
    /// Defaults to exhaustive when the joint type space is small enough.
    #[serde(default)]
    pub mode: Option<ExpectationMode>,
}

impl FairnessProblem {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FairnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| FairnessError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| FairnessError::Format(format!("{}: {e}", path.display())))
    }

    pub fn expectation_mode(&self, seed: u64) -> ExpectationMode {
        self.mode
            .unwrap_or_else(|| ExpectationMode::auto(self.occupants.len(), seed))
    }

    pub fn moment_cache(
        &self,
        table: &ValuationTable,
        seed: u64,
    ) -> Result<MomentCache, FairnessError> {
        let costs = self.costs.cost_vector(self.t0_c)?;
        build_moment_cache(
            &self.priors,
            &self.occupants,
            self.t0_c,
            &costs,
            table,
            self.expectation_mode(seed),
        )
    }

    pub fn solve(
        &self,
        table: &ValuationTable,
        seed: u64,
    ) -> Result<FairnessSolution, FairnessError> {
        optimize_fairness(&self.moment_cache(table, seed)?)
    }
}
