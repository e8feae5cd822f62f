use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::energy::{CostTable, EnergyModelConfig, WeatherSample};
use crate::fairness::DEFAULT_SMOOTHING;
use crate::mechanism::OccupantId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Temperature follows a fixed sweep; reports only train the priors.
    PreferenceCollection,
    /// Reports drive the set-point and payments.
    FairAllocation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentRule {
    /// Parameters tuned for equal expected net benefit.
    #[default]
    Generalized,
    /// Equal cost shares and equal redistribution.
    StandardAgv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub temp_lower: i32,
    pub temp_upper: i32,
    pub step: i32,
    pub round_length_ms: i64,
    /// Starting phase. A collection phase hands over to fair allocation
    /// after sweeping every temperature point twice.
    pub phase: Phase,
    /// First set-point when the session starts in fair allocation.
    pub initial_temp: i32,
    pub smoothing: f64,
    pub occupancy: Vec<OccupantId>,
    pub payment_rule: PaymentRule,
    /// Seeds Monte Carlo expectations for groups too large to enumerate.
    pub seed: u64,
    pub mc_samples: usize,
    /// Total-variation change in any occupant's prior that triggers a
    /// fairness re-solve.
    pub refresh_tv: f64,
    pub energy: EnergyModelConfig,
    /// Outdoor temperature used when no weather trace is given.
    pub outdoor_c: f64,
    /// Per-round weather, cycled.
    pub weather: Vec<WeatherSample>,
    /// Externally computed costs; overrides the energy model when present.
    pub cost_table: Option<CostTable>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            temp_lower: 22,
            temp_upper: 26,
            step: 1,
            round_length_ms: 30 * 60 * 1000,
            phase: Phase::PreferenceCollection,
            initial_temp: 22,
            smoothing: DEFAULT_SMOOTHING,
            occupancy: Vec::new(),
            payment_rule: PaymentRule::Generalized,
            seed: 0,
            mc_samples: 100_000,
            refresh_tv: 0.05,
            energy: EnergyModelConfig::default(),
            outdoor_c: 30.0,
            weather: Vec::new(),
            cost_table: None,
        }
    }
}

impl SessionConfig {
    pub fn with_occupants(ids: impl IntoIterator<Item = impl Into<OccupantId>>) -> Self {
        Self {
            occupancy: ids.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn bounds(&self) -> (i32, i32) {
        (self.temp_lower, self.temp_upper)
    }

    /// Collection-phase temperatures: up from the lower bound, then back down,
    /// so each point is visited twice.
    pub fn collection_sweep(&self) -> Vec<i32> {
        let up: Vec<i32> = (self.temp_lower..=self.temp_upper).collect();
        up.iter().chain(up.iter().rev()).copied().collect()
    }

    pub fn weather_for(&self, round: usize) -> WeatherSample {
        if self.weather.is_empty() {
            WeatherSample::constant(self.outdoor_c)
        } else {
            self.weather[round % self.weather.len()].clone()
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |field: &str, message: String| {
            Err(SessionError::InvalidConfig {
                field: field.to_string(),
                message,
            })
        };
        if self.temp_lower >= self.temp_upper {
            return bad(
                "temp_lower",
                format!(
                    "must be below temp_upper ({} >= {})",
                    self.temp_lower, self.temp_upper
                ),
            );
        }
        if self.step != 1 {
            return bad(
                "step",
                format!("only 1 C steps are supported, got {}", self.step),
            );
        }
        if self.round_length_ms <= 0 {
            return bad("round_length_ms", "must be positive".into());
        }
        if self.initial_temp < self.temp_lower || self.initial_temp > self.temp_upper {
            return bad(
                "initial_temp",
                format!("must lie within [{}, {}]", self.temp_lower, self.temp_upper),
            );
        }
        if !self.smoothing.is_finite() || self.smoothing <= 0.0 {
            return bad("smoothing", "must be positive".into());
        }
        if self.occupancy.is_empty() {
            return bad("occupancy", "at least one occupant is required".into());
        }
        let mut seen = BTreeSet::new();
        for o in &self.occupancy {
            if o.as_str().is_empty() {
                return bad("occupancy", "occupant ids must be nonempty".into());
            }
            if !seen.insert(o) {
                return bad("occupancy", format!("duplicate occupant id {o}"));
            }
        }
        if self.mc_samples == 0 {
            return bad("mc_samples", "must be positive".into());
        }
        if self.refresh_tv.is_nan() || self.refresh_tv < 0.0 {
            return bad("refresh_tv", "must be >= 0".into());
        }
        if let Err(e) = self.energy.validate(self.bounds()) {
            return bad("energy", e.to_string());
        }
        if let Err(e) = WeatherSample::constant(self.outdoor_c).validate() {
            return bad("outdoor_c", e.to_string());
        }
        for w in &self.weather {
            if let Err(e) = w.validate() {
                return bad("weather", e.to_string());
            }
        }
        if let Some(table) = &self.cost_table {
            if table.rounds.is_empty() {
                return bad("cost_table", "has no rows".into());
            }
            if let Err(e) = table.validate(self.bounds()) {
                return bad("cost_table", e.to_string());
            }
        }
        Ok(())
    }

    /// Parse TOML or JSON, chosen by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SessionError::Io(format!("{}: {e}", path.display())))?;
        let config = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| match e {
            SessionError::Format(m) => SessionError::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        serde_json::from_str(text).map_err(|e| SessionError::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, SessionError> {
        toml::from_str(text).map_err(|e| SessionError::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_visits_each_point_twice() {
        let c = SessionConfig::with_occupants(["a"]);
        assert_eq!(
            c.collection_sweep(),
            vec![22, 23, 24, 25, 26, 26, 25, 24, 23, 22]
        );
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = SessionConfig::with_occupants(["a", "b"]);
        c.validate().unwrap();
        c.temp_lower = 27;
        assert!(
            matches!(c.validate(), Err(SessionError::InvalidConfig { field, .. }) if field == "temp_lower")
        );

        let c = SessionConfig::with_occupants(["a", "a"]);
        assert!(
            matches!(c.validate(), Err(SessionError::InvalidConfig { field, .. }) if field == "occupancy")
        );

        let mut c = SessionConfig::with_occupants(["a"]);
        c.energy.base_setpoint_c = 30;
        assert!(
            matches!(c.validate(), Err(SessionError::InvalidConfig { field, .. }) if field == "energy")
        );
    }

    #[test]
    fn parses_toml() {
        let c = SessionConfig::from_toml(
            r#"
            occupancy = ["a", "b", "c"]
            phase = "fair_allocation"
            initial_temp = 24
            [energy]
            price_per_kwh = 0.5
            "#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.phase, Phase::FairAllocation);
        assert_eq!(c.energy.price_per_kwh, 0.5);
        assert_eq!(c.energy.cop, 3.0);
        assert!(SessionConfig::from_toml("unknown = 1").is_err());
    }
}
