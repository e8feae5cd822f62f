use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MechanismError;

/// Number of discrete comfort types an occupant can report.
pub const TYPE_COUNT: usize = 9;

/// Opaque occupant identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupantId(pub String);

impl OccupantId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OccupantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for OccupantId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreferenceGroup {
    Cooler,
    Current,
    Warmer,
}

impl PreferenceGroup {
    /// The outcome column this group values most.
    pub fn favoured(self) -> OutcomeKind {
        match self {
            PreferenceGroup::Cooler => OutcomeKind::Cooler,
            PreferenceGroup::Current => OutcomeKind::Stay,
            PreferenceGroup::Warmer => OutcomeKind::Warmer,
        }
    }
}

/// One of the nine reportable thermal-comfort types, ids 1..=9.
///
/// Ids 1-3 prefer cooler, 4-6 prefer the current temperature, 7-9 prefer
/// warmer; within a group a higher id is a stronger preference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ComfortType(u8);

impl ComfortType {
    pub const ALL: [ComfortType; TYPE_COUNT] = [
        ComfortType(1),
        ComfortType(2),
        ComfortType(3),
        ComfortType(4),
        ComfortType(5),
        ComfortType(6),
        ComfortType(7),
        ComfortType(8),
        ComfortType(9),
    ];

    pub fn new(id: u8) -> Result<Self, MechanismError> {
        if (1..=TYPE_COUNT as u8).contains(&id) {
            Ok(Self(id))
        } else {
            Err(MechanismError::InvalidType(id))
        }
    }

    /// Type at a zero-based index (0..9).
    pub fn from_index(index: usize) -> Self {
        assert!(index < TYPE_COUNT, "type index {index} out of range");
        Self(index as u8 + 1)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn group(self) -> PreferenceGroup {
        match self.0 {
            1..=3 => PreferenceGroup::Cooler,
            4..=6 => PreferenceGroup::Current,
            _ => PreferenceGroup::Warmer,
        }
    }

    /// Strength within the group, 1..=3.
    pub fn intensity(self) -> u8 {
        (self.0 - 1) % 3 + 1
    }

    pub fn label(self) -> String {
        let group = match self.group() {
            PreferenceGroup::Cooler => "cooler",
            PreferenceGroup::Current => "current",
            PreferenceGroup::Warmer => "warmer",
        };
        format!("Prefer {group} ({})", self.intensity())
    }
}

impl TryFrom<u8> for ComfortType {
    type Error = MechanismError;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        Self::new(id)
    }
}

impl From<ComfortType> for u8 {
    fn from(t: ComfortType) -> u8 {
        t.0
    }
}

impl fmt::Display for ComfortType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Direction of a set-point change. Discriminants are the valuation-table
/// column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Cooler = 0,
    Stay = 1,
    Warmer = 2,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 3] = [OutcomeKind::Cooler, OutcomeKind::Stay, OutcomeKind::Warmer];

    pub fn column(self) -> usize {
        self as usize
    }

    pub fn offset(self) -> i32 {
        match self {
            OutcomeKind::Cooler => -1,
            OutcomeKind::Stay => 0,
            OutcomeKind::Warmer => 1,
        }
    }

    pub fn from_offset(offset: i32) -> Option<Self> {
        match offset {
            -1 => Some(OutcomeKind::Cooler),
            0 => Some(OutcomeKind::Stay),
            1 => Some(OutcomeKind::Warmer),
            _ => None,
        }
    }

    /// Rank used to break welfare and cost ties; lower wins.
    pub(crate) fn tie_rank(self) -> u8 {
        match self {
            OutcomeKind::Stay => 0,
            OutcomeKind::Cooler => 1,
            OutcomeKind::Warmer => 2,
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeKind::Cooler => "cooler",
            OutcomeKind::Stay => "stay",
            OutcomeKind::Warmer => "warmer",
        })
    }
}

/// A candidate set-point for the next round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub setpoint_c: i32,
}

impl Outcome {
    pub fn relative_to(t0: i32, kind: OutcomeKind) -> Self {
        Self {
            kind,
            setpoint_c: t0 + kind.offset(),
        }
    }
}

/// Willingness to pay, in dollars, of each comfort type for each outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuationTable {
    values: [[f64; 3]; TYPE_COUNT],
}

const EXPERIMENT_TABLE: [[f64; 3]; TYPE_COUNT] = [
    [0.2, 0.0, -0.2],
    [0.4, 0.0, -0.2],
    [0.4, -0.2, -0.4],
    [0.0, 0.4, 0.0],
    [0.0, 0.2, -0.2],
    [-0.2, 0.2, 0.0],
    [-0.2, 0.0, 0.2],
    [-0.2, 0.0, 0.4],
    [-0.4, -0.2, 0.4],
];

pub const VALUATION_BOUND: f64 = 0.4;

impl Default for ValuationTable {
    fn default() -> Self {
        Self {
            values: EXPERIMENT_TABLE,
        }
    }
}

impl ValuationTable {
    /// Build a table, checking the value bound and that each row peaks in the
    /// column of its preference group.
    pub fn new(values: [[f64; 3]; TYPE_COUNT]) -> Result<Self, MechanismError> {
        for (row_index, row) in values.iter().enumerate() {
            let t = ComfortType::from_index(row_index);
            for v in row {
                if !v.is_finite() || v.abs() > VALUATION_BOUND + 1e-12 {
                    return Err(MechanismError::InvalidTable(format!(
                        "type {}: value {v} outside [-{VALUATION_BOUND}, {VALUATION_BOUND}]",
                        t.id()
                    )));
                }
            }
            let favoured = t.group().favoured().column();
            if row.iter().any(|v| *v > row[favoured]) {
                return Err(MechanismError::InvalidTable(format!(
                    "type {}: row maximum is not in the {} column",
                    t.id(),
                    t.group().favoured()
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn value(&self, t: ComfortType, kind: OutcomeKind) -> f64 {
        self.values[t.index()][kind.column()]
    }

    pub fn row(&self, t: ComfortType) -> [f64; 3] {
        self.values[t.index()]
    }

    /// Read a table from CSV with header `type_id,cooler,stay,warmer`.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, MechanismError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| MechanismError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self, MechanismError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| MechanismError::InvalidTable(e.to_string()))?
            .clone();
        let expected = ["type_id", "cooler", "stay", "warmer"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(MechanismError::InvalidTable(format!(
                "expected header {}, found {}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut values = [[f64::NAN; 3]; TYPE_COUNT];
        let mut seen = [false; TYPE_COUNT];
        for record in rdr.records() {
            let record = record.map_err(|e| MechanismError::InvalidTable(e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let parse = |idx: usize| -> Result<f64, MechanismError> {
                let field = record.get(idx).unwrap_or("");
                field.parse::<f64>().map_err(|_| {
                    MechanismError::InvalidTable(format!("line {line}: malformed number {field:?}"))
                })
            };
            let id_field = record.get(0).unwrap_or("");
            let id: u8 = id_field.parse().map_err(|_| {
                MechanismError::InvalidTable(format!("line {line}: malformed type id {id_field:?}"))
            })?;
            let t = ComfortType::new(id)?;
            if seen[t.index()] {
                return Err(MechanismError::InvalidTable(format!(
                    "line {line}: duplicate row for type {id}"
                )));
            }
            seen[t.index()] = true;
            values[t.index()] = [parse(1)?, parse(2)?, parse(3)?];
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(MechanismError::InvalidTable(format!(
                "missing row for type {}",
                missing + 1
            )));
        }
        Self::new(values)
    }
}

/// Probability distribution over the nine comfort types.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TypeDistribution([f64; TYPE_COUNT]);

pub const DISTRIBUTION_TOLERANCE: f64 = 1e-12;

impl TypeDistribution {
    pub fn new(probs: [f64; TYPE_COUNT]) -> Result<Self, MechanismError> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(MechanismError::InvalidPrior(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if total == 0.0 {
            return Err(MechanismError::InvalidPrior(
                "zero probability everywhere".into(),
            ));
        }
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(MechanismError::InvalidPrior(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    /// Normalize nonnegative weights into a distribution.
    pub fn from_weights(weights: [f64; TYPE_COUNT]) -> Result<Self, MechanismError> {
        let total: f64 = weights.iter().sum();
        if !total.is_finite() || total <= 0.0 || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(MechanismError::InvalidPrior(
                "zero probability everywhere".into(),
            ));
        }
        let mut probs = weights.map(|w| w / total);
        // Fold the rounding residue into the largest entry.
        let residue = 1.0 - probs.iter().sum::<f64>();
        let max_index = argmax(&probs);
        probs[max_index] += residue;
        Self::new(probs)
    }

    pub fn uniform() -> Self {
        Self([1.0 / TYPE_COUNT as f64; TYPE_COUNT])
    }

    pub fn point_mass(t: ComfortType) -> Self {
        let mut probs = [0.0; TYPE_COUNT];
        probs[t.index()] = 1.0;
        Self(probs)
    }

    pub fn prob(&self, t: ComfortType) -> f64 {
        self.0[t.index()]
    }

    pub fn probs(&self) -> &[f64; TYPE_COUNT] {
        &self.0
    }

    /// Most likely type, lowest id on ties.
    pub fn mode(&self) -> ComfortType {
        ComfortType::from_index(argmax(&self.0))
    }

    pub fn total_variation(&self, other: &TypeDistribution) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Inverse-CDF draw from a uniform variate in [0, 1).
    pub fn sample_with(&self, u: f64) -> ComfortType {
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (k, p) in self.0.iter().enumerate() {
            if *p > 0.0 {
                last_positive = k;
                acc += p;
                if u < acc {
                    return ComfortType::from_index(k);
                }
            }
        }
        ComfortType::from_index(last_positive)
    }
}

fn argmax(values: &[f64; TYPE_COUNT]) -> usize {
    let mut best = 0;
    for k in 1..TYPE_COUNT {
        if values[k] > values[best] + DISTRIBUTION_TOLERANCE {
            best = k;
        }
    }
    best
}

impl TryFrom<Vec<f64>> for TypeDistribution {
    type Error = MechanismError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let probs: [f64; TYPE_COUNT] = v.try_into().map_err(|v: Vec<f64>| {
            MechanismError::InvalidPrior(format!("expected 9 probabilities, found {}", v.len()))
        })?;
        Self::new(probs)
    }
}

impl From<TypeDistribution> for Vec<f64> {
    fn from(d: TypeDistribution) -> Vec<f64> {
        d.0.to_vec()
    }
}

/// Reports for one round: one comfort type per occupant, in a fixed order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeProfile {
    reports: Vec<(OccupantId, ComfortType)>,
}

impl TypeProfile {
    pub fn new(reports: Vec<(OccupantId, ComfortType)>) -> Result<Self, MechanismError> {
        if reports.is_empty() {
            return Err(MechanismError::EmptyProfile);
        }
        for (i, (id, _)) in reports.iter().enumerate() {
            if reports[..i].iter().any(|(other, _)| other == id) {
                return Err(MechanismError::DuplicateOccupant(id.clone()));
            }
        }
        Ok(Self { reports })
    }

    /// Profile with generated ids `o1..on`.
    pub fn from_types(types: &[ComfortType]) -> Result<Self, MechanismError> {
        Self::new(
            types
                .iter()
                .enumerate()
                .map(|(i, t)| (OccupantId(format!("o{}", i + 1)), *t))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn types(&self) -> Vec<ComfortType> {
        self.reports.iter().map(|(_, t)| *t).collect()
    }

    pub fn occupants(&self) -> impl Iterator<Item = &OccupantId> {
        self.reports.iter().map(|(id, _)| id)
    }

    pub fn reports(&self) -> &[(OccupantId, ComfortType)] {
        &self.reports
    }
}
