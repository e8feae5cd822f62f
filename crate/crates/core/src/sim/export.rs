use super::{BaselineReport, PriceSweep, SessionResult, SimError};
use crate::money::to_decimal;

fn finish(writer: csv::Writer<Vec<u8>>) -> Result<String, SimError> {
    let bytes = writer
        .into_inner()
        .map_err(|e| SimError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SimError::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Io(e.to_string())
}

pub const ROUNDS_HEADER: [&str; 10] = [
    "round",
    "phase",
    "t0_c",
    "outcome",
    "setpoint_c",
    "sum_valuations",
    "incremental_cost",
    "welfare",
    "energy_cost",
    "payments_total",
];

pub const OCCUPANTS_HEADER: [&str; 3] = ["occupant", "mean_pi", "var_pi"];

/// A CSV holding only `header`.
pub fn header_csv(header: &[&str]) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    finish(w)
}

/// One line per round: outcome, welfare terms, and what was paid.
pub fn rounds_csv(result: &SessionResult) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROUNDS_HEADER).map_err(csv_err)?;
    for r in &result.rounds {
        let phase = serde_json::to_value(r.phase).expect("phase serializes");
        w.write_record([
            r.index.to_string(),
            phase.as_str().unwrap_or_default().to_string(),
            r.t0_c.to_string(),
            r.outcome.kind.to_string(),
            r.outcome.setpoint_c.to_string(),
            to_decimal(r.welfare.sum_valuations),
            to_decimal(r.welfare.incremental_cost),
            to_decimal(r.welfare.welfare),
            to_decimal(r.energy_cost),
            r.payments
                .as_ref()
                .map(|p| to_decimal(p.total()))
                .unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn occupants_csv(result: &SessionResult) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(OCCUPANTS_HEADER).map_err(csv_err)?;
    for o in &result.aggregates.occupants {
        w.write_record([
            o.occupant.to_string(),
            to_decimal(o.mean_pi),
            to_decimal(o.var_pi),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Two columns, price and common expected net benefit; the benefit is
/// blank where it could not be equalized.
pub fn price_sweep_csv(sweep: Option<&PriceSweep>) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["price_per_kwh", "expected_net_benefit"])
        .map_err(csv_err)?;
    for p in sweep.map(|s| s.points.as_slice()).unwrap_or_default() {
        w.write_record([
            p.price_per_kwh.to_string(),
            p.common_benefit.map(to_decimal).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Energy cost per policy per seed.
pub fn baseline_csv(report: Option<&BaselineReport>) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "policy", "energy_cost", "mean_comfort"])
        .map_err(csv_err)?;
    if let Some(report) = report {
        let fixed = format!("fixed_{}", report.fixed_setpoint_c);
        for g in &report.groups {
            w.write_record([
                g.seed.to_string(),
                "generalized".into(),
                to_decimal(g.generalized_cost),
                to_decimal(g.generalized_comfort),
            ])
            .map_err(csv_err)?;
            w.write_record([
                g.seed.to_string(),
                fixed.clone(),
                to_decimal(g.fixed_cost),
                to_decimal(g.fixed_comfort),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}
