use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mechanism::OccupantId;
use crate::money;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerReason {
    MechanismPayment,
    Adjustment,
}

/// One e-currency movement. Negative amounts are debits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub occupant: OccupantId,
    pub round: u64,
    #[serde(with = "money::decimal")]
    pub amount: f64,
    pub reason: LedgerReason,
    #[serde(with = "money::decimal")]
    pub balance: f64,
}

/// Append-only per-occupant accounts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
    #[serde(with = "money::decimal_map")]
    balances: BTreeMap<OccupantId, f64>,
}

impl Ledger {
    pub fn open_accounts<'a>(occupants: impl IntoIterator<Item = &'a OccupantId>) -> Self {
        Self {
            entries: Vec::new(),
            balances: occupants.into_iter().map(|o| (o.clone(), 0.0)).collect(),
        }
    }

    /// The entry that posting `amount` would create.
    pub fn prepare(
        &self,
        occupant: &OccupantId,
        round: u64,
        amount: f64,
        reason: LedgerReason,
    ) -> LedgerEntry {
        let balance = self.balance(occupant).unwrap_or(0.0) + amount;
        LedgerEntry {
            occupant: occupant.clone(),
            round,
            amount,
            reason,
            balance,
        }
    }

    pub(crate) fn apply(&mut self, entry: LedgerEntry) {
        self.balances.insert(entry.occupant.clone(), entry.balance);
        self.entries.push(entry);
    }

    pub fn balance(&self, occupant: &OccupantId) -> Option<f64> {
        self.balances.get(occupant).copied()
    }

    pub fn balances(&self) -> &BTreeMap<OccupantId, f64> {
        &self.balances
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn entries_for<'a>(
        &'a self,
        occupant: &'a OccupantId,
    ) -> impl Iterator<Item = &'a LedgerEntry> + 'a {
        self.entries.iter().filter(move |e| &e.occupant == occupant)
    }

    /// Sum of all entries in `round`.
    pub fn round_total(&self, round: u64) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.round == round)
            .map(|e| e.amount)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balances_are_running_sums() {
        let a = OccupantId::new("a");
        let mut ledger = Ledger::open_accounts([&a]);
        assert_eq!(ledger.balance(&a), Some(0.0));
        for amount in [0.10, -0.03] {
            let e = ledger.prepare(&a, 0, amount, LedgerReason::Adjustment);
            ledger.apply(e);
        }
        assert!((ledger.balance(&a).unwrap() - 0.07).abs() < 1e-15);
        assert_eq!(ledger.entries_for(&a).count(), 2);
        assert_eq!(ledger.balance(&OccupantId::new("b")), None);
    }

    #[test]
    fn amounts_serialize_as_decimal_strings() {
        let e = LedgerEntry {
            occupant: "a".into(),
            round: 3,
            amount: -0.0125,
            reason: LedgerReason::MechanismPayment,
            balance: 1e-7,
        };
        let text = serde_json::to_string(&e).unwrap();
        assert!(text.contains(r#""amount":"-0.0125""#), "{text}");
        assert!(text.contains(r#""balance":"0.0000001""#), "{text}");
        assert_eq!(serde_json::from_str::<LedgerEntry>(&text).unwrap(), e);
    }
}
