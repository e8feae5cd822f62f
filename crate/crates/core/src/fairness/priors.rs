use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FairnessError;
use crate::mechanism::{ComfortType, MechanismError, OccupantId, TypeDistribution, TYPE_COUNT};

/// Default Laplace pseudo-count.
pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// Per-occupant, per-temperature type distributions.
///
/// Serialized as `{occupant: {temperature: [p1, ..., p9]}}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSet {
    priors: BTreeMap<OccupantId, BTreeMap<i32, TypeDistribution>>,
}

impl PriorSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// The same distribution for every occupant at every listed temperature.
    pub fn filled<'a>(
        occupants: impl IntoIterator<Item = &'a OccupantId>,
        temperatures: impl IntoIterator<Item = i32> + Clone,
        dist: TypeDistribution,
    ) -> Self {
        let mut set = Self::new();
        for occupant in occupants {
            for t0 in temperatures.clone() {
                set.insert(occupant.clone(), t0, dist);
            }
        }
        set
    }

    pub fn insert(&mut self, occupant: OccupantId, t0_c: i32, dist: TypeDistribution) {
        self.priors.entry(occupant).or_default().insert(t0_c, dist);
    }

    pub fn get(&self, occupant: &OccupantId, t0_c: i32) -> Option<&TypeDistribution> {
        self.priors.get(occupant)?.get(&t0_c)
    }

    pub fn occupants(&self) -> impl Iterator<Item = &OccupantId> {
        self.priors.keys()
    }

    pub fn temperatures(&self, occupant: &OccupantId) -> Vec<i32> {
        self.priors
            .get(occupant)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default()
    }

    /// Priors for `occupants` at `t0_c`, in the given order.
    pub fn for_occupants(
        &self,
        occupants: &[OccupantId],
        t0_c: i32,
    ) -> Result<Vec<TypeDistribution>, MechanismError> {
        occupants
            .iter()
            .map(|o| {
                self.get(o, t0_c)
                    .copied()
                    .ok_or_else(|| MechanismError::PriorNotInitialized {
                        occupant: o.clone(),
                        t0_c,
                    })
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, FairnessError> {
        serde_json::from_str(text).map_err(|e| FairnessError::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prior set serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FairnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| FairnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FairnessError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json())
            .map_err(|e| FairnessError::Io(format!("{}: {e}", path.display())))
    }
}

/// Observed report counts for one occupant at one temperature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeCounts(pub [f64; TYPE_COUNT]);

impl TypeCounts {
    pub fn observe(&mut self, t: ComfortType) {
        self.0[t.index()] += 1.0;
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Laplace-smoothed distribution `(count_k + s) / (total + 9 s)`.
    pub fn distribution(&self, smoothing: f64) -> TypeDistribution {
        assert!(smoothing > 0.0, "smoothing must be positive");
        let mut w = [0.0; TYPE_COUNT];
        for (wk, ck) in w.iter_mut().zip(self.0) {
            *wk = ck + smoothing;
        }
        TypeDistribution::from_weights(w).expect("positive weights form a distribution")
    }
}

/// Record `observed` and return the updated smoothed prior.
pub fn prior_update(
    counts: &mut TypeCounts,
    observed: ComfortType,
    smoothing: f64,
) -> TypeDistribution {
    counts.observe(observed);
    counts.distribution(smoothing)
}
