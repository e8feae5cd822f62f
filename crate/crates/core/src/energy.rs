//! Per-round energy cost of each candidate set-point.
//!
//! Costs come either from a single-zone steady-state conductance model with a
//! constant COP, or from a table of externally simulated costs. Occupants only
//! ever pay the increment over the base set-point, which the building covers.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::{Outcome, OutcomeKind};
use crate::money;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("invalid energy config: {field}: {message}")]
    InvalidConfig {
        field: &'static str,
        message: String,
    },
    #[error("no feasible outcomes")]
    EmptyFeasibleSet,
    #[error("cost table incomplete: round {round} has no cost for setpoint {setpoint_c} C")]
    IncompleteTable { round: u32, setpoint_c: i32 },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModelConfig {
    /// Envelope conductance, W/K.
    pub ua_w_per_k: f64,
    /// Lighting plus equipment, W.
    pub internal_gains_w: f64,
    pub cop: f64,
    /// Electricity price, $/kWh.
    pub price_per_kwh: f64,
    /// Round length, hours.
    pub interval_h: f64,
    /// Set-point whose cost the building pays.
    pub base_setpoint_c: i32,
}

impl Default for EnergyModelConfig {
    fn default() -> Self {
        Self {
            ua_w_per_k: 50.0,
            internal_gains_w: 400.0,
            cop: 3.0,
            price_per_kwh: 0.25,
            interval_h: 0.5,
            base_setpoint_c: 22,
        }
    }
}

impl EnergyModelConfig {
    pub fn validate(&self, bounds: (i32, i32)) -> Result<(), EnergyError> {
        let bad = |field, message: &str| {
            Err(EnergyError::InvalidConfig {
                field,
                message: message.to_string(),
            })
        };
        if self.ua_w_per_k.is_nan() || self.ua_w_per_k < 0.0 {
            return bad("ua_w_per_k", "must be >= 0");
        }
        if self.internal_gains_w.is_nan() || self.internal_gains_w < 0.0 {
            return bad("internal_gains_w", "must be >= 0");
        }
        if !self.cop.is_finite() || self.cop <= 0.0 {
            return bad("cop", "must be > 0");
        }
        if !self.price_per_kwh.is_finite() || self.price_per_kwh < 0.0 {
            return bad("price_per_kwh", "must be >= 0");
        }
        if !self.interval_h.is_finite() || self.interval_h <= 0.0 {
            return bad("interval_h", "must be > 0");
        }
        if self.base_setpoint_c < bounds.0 || self.base_setpoint_c > bounds.1 {
            return bad(
                "base_setpoint_c",
                &format!("must lie within [{}, {}]", bounds.0, bounds.1),
            );
        }
        Ok(())
    }

    pub fn with_price(mut self, price_per_kwh: f64) -> Self {
        self.price_per_kwh = price_per_kwh;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    pub timestamp: String,
    pub outdoor_c: f64,
}

impl WeatherSample {
    pub fn constant(outdoor_c: f64) -> Self {
        Self {
            timestamp: String::new(),
            outdoor_c,
        }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(-20.0..=60.0).contains(&self.outdoor_c) {
            return Err(EnergyError::InvalidConfig {
                field: "outdoor_c",
                message: format!("{} outside [-20, 60]", self.outdoor_c),
            });
        }
        Ok(())
    }
}

/// Read a weather trace with header `timestamp,outdoor_c`.
pub fn load_weather_csv(path: impl AsRef<Path>) -> Result<Vec<WeatherSample>, EnergyError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| EnergyError::Io(format!("{display}: {e}")))?;
    check_header(&mut rdr, &["timestamp", "outdoor_c"], &display)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&display, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let sample = WeatherSample {
            timestamp: record.get(0).unwrap_or("").to_string(),
            outdoor_c: parse_field(&record, 1, line, &display)?,
        };
        sample.validate().map_err(|e| EnergyError::Parse {
            path: display.clone(),
            line,
            message: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}

/// Thermal energy removed over one interval, kWh. Cooling only.
pub fn cooling_load(setpoint_c: f64, weather: &WeatherSample, config: &EnergyModelConfig) -> f64 {
    let watts = config.ua_w_per_k * (weather.outdoor_c - setpoint_c) + config.internal_gains_w;
    watts.max(0.0) * config.interval_h / 1000.0
}

/// Electricity cost of holding `setpoint_c` for one interval, $.
pub fn setpoint_cost(setpoint_c: i32, weather: &WeatherSample, config: &EnergyModelConfig) -> f64 {
    cooling_load(setpoint_c as f64, weather, config) / config.cop * config.price_per_kwh
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostProvenance {
    Model,
    Table,
    /// Supplied directly, e.g. by a fixture.
    Manual,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCost {
    pub kind: OutcomeKind,
    pub setpoint_c: i32,
    /// C(x).
    #[serde(with = "money::decimal")]
    pub absolute_usd: f64,
    /// C(x) - C(base).
    #[serde(with = "money::decimal")]
    pub incremental_usd: f64,
}

/// Costs of the feasible outcomes of one round, ordered Cooler, Stay, Warmer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    pub t0_c: i32,
    pub base_setpoint_c: i32,
    pub entries: Vec<OutcomeCost>,
    pub provenance: CostProvenance,
}

impl CostVector {
    /// Hand-set incremental costs, absolute cost taken equal to the increment.
    pub fn from_incremental(t0_c: i32, costs: &[(OutcomeKind, f64)]) -> Result<Self, EnergyError> {
        if costs.is_empty() {
            return Err(EnergyError::EmptyFeasibleSet);
        }
        let mut entries: Vec<OutcomeCost> = costs
            .iter()
            .map(|(kind, dc)| OutcomeCost {
                kind: *kind,
                setpoint_c: t0_c + kind.offset(),
                absolute_usd: *dc,
                incremental_usd: *dc,
            })
            .collect();
        entries.sort_by_key(|e| e.kind);
        entries.dedup_by_key(|e| e.kind);
        Ok(Self {
            t0_c,
            base_setpoint_c: t0_c,
            entries,
            provenance: CostProvenance::Manual,
        })
    }

    /// Same increment for all three outcomes.
    pub fn uniform(t0_c: i32, incremental: f64) -> Self {
        Self::from_incremental(t0_c, &OutcomeKind::ALL.map(|k| (k, incremental))).expect("nonempty")
    }

    pub fn get(&self, kind: OutcomeKind) -> Option<&OutcomeCost> {
        self.entries.iter().find(|e| e.kind == kind)
    }

    pub fn incremental(&self, kind: OutcomeKind) -> Option<f64> {
        self.get(kind).map(|e| e.incremental_usd)
    }

    pub fn absolute(&self, kind: OutcomeKind) -> Option<f64> {
        self.get(kind).map(|e| e.absolute_usd)
    }

    pub fn feasible_kinds(&self) -> Vec<OutcomeKind> {
        self.entries.iter().map(|e| e.kind).collect()
    }

    pub fn outcome(&self, kind: OutcomeKind) -> Outcome {
        Outcome::relative_to(self.t0_c, kind)
    }

    pub fn is_feasible(&self, kind: OutcomeKind) -> bool {
        self.get(kind).is_some()
    }

    /// Multiply every cost by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.absolute_usd *= factor;
            e.incremental_usd *= factor;
        }
        out
    }
}

/// Outcomes reachable from `t0` without leaving `[lower, upper]`.
pub fn feasible_outcomes(t0_c: i32, bounds: (i32, i32)) -> Vec<OutcomeKind> {
    OutcomeKind::ALL
        .into_iter()
        .filter(|k| {
            let s = t0_c + k.offset();
            s >= bounds.0 && s <= bounds.1
        })
        .collect()
}

/// Model-based cost vector for the feasible outcomes around `t0_c`.
pub fn outcome_costs(
    t0_c: i32,
    feasible: &[OutcomeKind],
    weather: &WeatherSample,
    config: &EnergyModelConfig,
) -> Result<CostVector, EnergyError> {
    if feasible.is_empty() {
        return Err(EnergyError::EmptyFeasibleSet);
    }
    let base = setpoint_cost(config.base_setpoint_c, weather, config);
    let mut kinds = feasible.to_vec();
    kinds.sort();
    kinds.dedup();
    let entries = kinds
        .into_iter()
        .map(|kind| {
            let setpoint_c = t0_c + kind.offset();
            let absolute_usd = setpoint_cost(setpoint_c, weather, config);
            let incremental_usd = if setpoint_c == config.base_setpoint_c {
                0.0
            } else {
                absolute_usd - base
            };
            OutcomeCost {
                kind,
                setpoint_c,
                absolute_usd,
                incremental_usd,
            }
        })
        .collect();
    Ok(CostVector {
        t0_c,
        base_setpoint_c: config.base_setpoint_c,
        entries,
        provenance: CostProvenance::Model,
    })
}

/// Externally computed costs for every set-point, one row set per round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub rounds: Vec<RoundCosts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundCosts {
    pub round: u32,
    #[serde(with = "money::decimal_map")]
    pub by_setpoint: BTreeMap<i32, f64>,
}

impl RoundCosts {
    pub fn cost_vector(
        &self,
        t0_c: i32,
        feasible: &[OutcomeKind],
        base_setpoint_c: i32,
    ) -> Result<CostVector, EnergyError> {
        if feasible.is_empty() {
            return Err(EnergyError::EmptyFeasibleSet);
        }
        let lookup = |setpoint_c: i32| {
            self.by_setpoint
                .get(&setpoint_c)
                .copied()
                .ok_or(EnergyError::IncompleteTable {
                    round: self.round,
                    setpoint_c,
                })
        };
        let base = lookup(base_setpoint_c)?;
        let mut kinds = feasible.to_vec();
        kinds.sort();
        kinds.dedup();
        let entries = kinds
            .into_iter()
            .map(|kind| {
                let setpoint_c = t0_c + kind.offset();
                let absolute_usd = lookup(setpoint_c)?;
                Ok(OutcomeCost {
                    kind,
                    setpoint_c,
                    absolute_usd,
                    incremental_usd: if setpoint_c == base_setpoint_c {
                        0.0
                    } else {
                        absolute_usd - base
                    },
                })
            })
            .collect::<Result<Vec<_>, EnergyError>>()?;
        Ok(CostVector {
            t0_c,
            base_setpoint_c,
            entries,
            provenance: CostProvenance::Table,
        })
    }
}

impl CostTable {
    /// Costs for a round, cycling when the table is shorter than the session.
    pub fn for_round(&self, index: usize) -> Option<&RoundCosts> {
        if self.rounds.is_empty() {
            None
        } else {
            Some(&self.rounds[index % self.rounds.len()])
        }
    }

    pub fn validate(&self, bounds: (i32, i32)) -> Result<(), EnergyError> {
        for r in &self.rounds {
            for setpoint_c in bounds.0..=bounds.1 {
                if !r.by_setpoint.contains_key(&setpoint_c) {
                    return Err(EnergyError::IncompleteTable {
                        round: r.round,
                        setpoint_c,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Read a cost table with header `round,setpoint_c,cost_usd`. Every round must
/// cover every set-point in `bounds`.
pub fn load_cost_table(
    path: impl AsRef<Path>,
    bounds: (i32, i32),
) -> Result<CostTable, EnergyError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| EnergyError::Io(format!("{display}: {e}")))?;
    check_header(&mut rdr, &["round", "setpoint_c", "cost_usd"], &display)?;
    let mut rounds: BTreeMap<u32, BTreeMap<i32, f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&display, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let round: u32 = parse_field(&record, 0, line, &display)?;
        let setpoint_c: i32 = parse_field(&record, 1, line, &display)?;
        let cost: f64 = parse_field(&record, 2, line, &display)?;
        if !cost.is_finite() {
            return Err(EnergyError::Parse {
                path: display,
                line,
                message: "cost must be finite".into(),
            });
        }
        rounds.entry(round).or_default().insert(setpoint_c, cost);
    }
    let table = CostTable {
        rounds: rounds
            .into_iter()
            .map(|(round, by_setpoint)| RoundCosts { round, by_setpoint })
            .collect(),
    };
    table.validate(bounds)?;
    Ok(table)
}

fn check_header<R: std::io::Read>(
    rdr: &mut csv::Reader<R>,
    expected: &[&str],
    path: &str,
) -> Result<(), EnergyError> {
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(EnergyError::Parse {
            path: path.to_string(),
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    line: u64,
    path: &str,
) -> Result<T, EnergyError> {
    let field = record.get(index).unwrap_or("");
    field.parse().map_err(|_| EnergyError::Parse {
        path: path.to_string(),
        line,
        message: format!("malformed number {field:?}"),
    })
}

fn csv_error(path: &str, e: csv::Error) -> EnergyError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    EnergyError::Parse {
        path: path.to_string(),
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn example_config() -> EnergyModelConfig {
        EnergyModelConfig {
            ua_w_per_k: 50.0,
            internal_gains_w: 400.0,
            cop: 3.0,
            price_per_kwh: 0.5,
            interval_h: 0.5,
            base_setpoint_c: 22,
        }
    }

    #[test]
    fn cooling_load_examples() {
        let cfg = example_config();
        let hot = WeatherSample::constant(32.0);
        assert!((cooling_load(24.0, &hot, &cfg) - 0.4).abs() < 1e-15);
        let cold = WeatherSample::constant(10.0);
        assert_eq!(cooling_load(24.0, &cold, &cfg), 0.0);
        let mut no_gains = cfg;
        no_gains.internal_gains_w = 0.0;
        assert_eq!(
            cooling_load(24.0, &WeatherSample::constant(24.0), &no_gains),
            0.0
        );
    }

    #[test]
    fn outcome_cost_example() {
        let cfg = example_config();
        let costs = outcome_costs(
            23,
            &[OutcomeKind::Warmer],
            &WeatherSample::constant(32.0),
            &cfg,
        )
        .unwrap();
        let warmer = costs.get(OutcomeKind::Warmer).unwrap();
        assert_eq!(warmer.setpoint_c, 24);
        assert!((warmer.absolute_usd - 0.4 / 3.0 * 0.5).abs() < 1e-15);
        assert!((warmer.incremental_usd - (0.4 - 0.45) / 3.0 * 0.5).abs() < 1e-15);
        assert!((warmer.incremental_usd + 0.008_333_333).abs() < 1e-6);
    }

    #[test]
    fn stay_at_base_costs_nothing_extra() {
        let cfg = example_config();
        let costs = outcome_costs(
            22,
            &feasible_outcomes(22, (22, 26)),
            &WeatherSample::constant(31.0),
            &cfg,
        )
        .unwrap();
        assert_eq!(costs.incremental(OutcomeKind::Stay), Some(0.0));
        assert_eq!(
            costs.feasible_kinds(),
            vec![OutcomeKind::Stay, OutcomeKind::Warmer]
        );
    }

    #[test]
    fn doubling_cop_halves_costs() {
        let cfg = example_config();
        let mut doubled = cfg;
        doubled.cop *= 2.0;
        let w = WeatherSample::constant(30.0);
        let all = OutcomeKind::ALL;
        let a = outcome_costs(24, &all, &w, &cfg).unwrap();
        let b = outcome_costs(24, &all, &w, &doubled).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert!((x.absolute_usd / 2.0 - y.absolute_usd).abs() < 1e-15);
        }
    }

    #[test]
    fn feasibility_clamps_at_bounds() {
        assert_eq!(
            feasible_outcomes(26, (22, 26)),
            vec![OutcomeKind::Cooler, OutcomeKind::Stay]
        );
        assert_eq!(
            feasible_outcomes(22, (22, 26)),
            vec![OutcomeKind::Stay, OutcomeKind::Warmer]
        );
        assert_eq!(feasible_outcomes(24, (22, 26)).len(), 3);
    }

    #[test]
    fn config_validation() {
        let mut cfg = example_config();
        cfg.cop = 0.0;
        assert!(cfg.validate((22, 26)).is_err());
        let mut cfg = example_config();
        cfg.base_setpoint_c = 27;
        assert!(cfg.validate((22, 26)).is_err());
        assert!(example_config().validate((22, 26)).is_ok());
    }

    fn write_table(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn table_body(rounds: u32, skip: Option<(u32, i32)>, cost: impl Fn(i32) -> f64) -> String {
        let mut s = String::from("round,setpoint_c,cost_usd\n");
        for r in 1..=rounds {
            for sp in 22..=26 {
                if skip == Some((r, sp)) {
                    continue;
                }
                s.push_str(&format!("{r},{sp},{}\n", cost(sp)));
            }
        }
        s
    }

    #[test]
    fn constant_table_has_zero_increments() {
        let f = write_table(&table_body(2, None, |_| 0.07));
        let table = load_cost_table(f.path(), (22, 26)).unwrap();
        let cv = table.rounds[1]
            .cost_vector(24, &OutcomeKind::ALL, 22)
            .unwrap();
        assert!(cv.entries.iter().all(|e| e.incremental_usd == 0.0));
        assert_eq!(cv.provenance, CostProvenance::Table);
    }

    #[test]
    fn table_values_pass_through() {
        let f = write_table(&table_body(1, None, |sp| 0.1 - 0.01 * (sp - 22) as f64));
        let table = load_cost_table(f.path(), (22, 26)).unwrap();
        let cv = table.rounds[0]
            .cost_vector(24, &OutcomeKind::ALL, 22)
            .unwrap();
        for e in &cv.entries {
            assert_eq!(e.absolute_usd, 0.1 - 0.01 * (e.setpoint_c - 22) as f64);
        }
    }

    #[test]
    fn missing_setpoint_is_reported() {
        let f = write_table(&table_body(3, Some((3, 26)), |_| 0.05));
        let err = load_cost_table(f.path(), (22, 26)).unwrap_err();
        assert_eq!(
            err,
            EnergyError::IncompleteTable {
                round: 3,
                setpoint_c: 26
            }
        );
    }

    #[test]
    fn malformed_number_names_line() {
        let f = write_table("round,setpoint_c,cost_usd\n1,22,0.1\n1,23,abc\n");
        match load_cost_table(f.path(), (22, 26)).unwrap_err() {
            EnergyError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weather_csv_loads() {
        let f = write_table("timestamp,outdoor_c\n2016-05-01T09:00,30.5\n2016-05-01T09:30,31\n");
        let trace = load_weather_csv(f.path()).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace[1].outdoor_c, 31.0);
        let bad = write_table("timestamp,outdoor_c\nx,75\n");
        assert!(load_weather_csv(bad.path()).is_err());
    }
}
