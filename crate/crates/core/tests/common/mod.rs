//! Brute-force reference implementations used as test oracles.
//!
//! Everything here is written directly from the definitions, without the
//! library's precomputed tables, so agreement is meaningful.
#![allow(dead_code)]

use std::path::PathBuf;

use setpoint_core::energy::CostVector;
use setpoint_core::mechanism::{ComfortType, OutcomeKind, TypeDistribution, ValuationTable};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

/// Every joint profile with its probability.
pub fn profiles(priors: &[TypeDistribution]) -> Vec<(Vec<ComfortType>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for prior in priors {
        let mut next = Vec::with_capacity(out.len() * 9);
        for (prefix, p) in &out {
            for t in ComfortType::ALL {
                let mut v = prefix.clone();
                v.push(t);
                next.push((v, p * prior.prob(t)));
            }
        }
        out = next;
    }
    out
}

pub fn choose(types: &[ComfortType], costs: &CostVector, table: &ValuationTable) -> OutcomeKind {
    let rank = |k: OutcomeKind| match k {
        OutcomeKind::Stay => 0,
        OutcomeKind::Cooler => 1,
        OutcomeKind::Warmer => 2,
    };
    let mut best: Option<(OutcomeKind, f64, f64)> = None;
    for e in &costs.entries {
        let w: f64 = types.iter().map(|t| table.value(*t, e.kind)).sum::<f64>() - e.incremental_usd;
        let better = match best {
            None => true,
            Some((bk, bw, bc)) => {
                if (w - bw).abs() <= 1e-12 {
                    e.incremental_usd < bc || (e.incremental_usd == bc && rank(e.kind) < rank(bk))
                } else {
                    w > bw
                }
            }
        };
        if better {
            best = Some((e.kind, w, e.incremental_usd));
        }
    }
    best.unwrap().0
}

pub fn welfare_of(
    types: &[ComfortType],
    kind: OutcomeKind,
    costs: &CostVector,
    table: &ValuationTable,
) -> f64 {
    types.iter().map(|t| table.value(*t, kind)).sum::<f64>() - costs.incremental(kind).unwrap()
}

/// Expected cost-adjusted value of the others when `i` reports `own`.
pub fn psi(
    i: usize,
    own: ComfortType,
    priors: &[TypeDistribution],
    alpha: &[f64],
    costs: &CostVector,
    table: &ValuationTable,
) -> f64 {
    let mut fixed = priors.to_vec();
    fixed[i] = TypeDistribution::point_mass(own);
    let mut total = 0.0;
    for (types, p) in profiles(&fixed) {
        if p == 0.0 {
            continue;
        }
        let kind = choose(&types, costs, table);
        let dc = costs.incremental(kind).unwrap();
        let others: f64 = (0..types.len())
            .filter(|&j| j != i)
            .map(|j| table.value(types[j], kind) - alpha[j] * dc)
            .sum();
        total += p * others;
    }
    total
}

/// `psi[i][t]` for every occupant and type.
pub fn psi_table(
    priors: &[TypeDistribution],
    alpha: &[f64],
    costs: &CostVector,
    table: &ValuationTable,
) -> Vec<[f64; 9]> {
    (0..priors.len())
        .map(|i| {
            let mut row = [0.0; 9];
            for t in ComfortType::ALL {
                row[t.index()] = psi(i, t, priors, alpha, costs, table);
            }
            row
        })
        .collect()
}

pub fn payments(
    types: &[ComfortType],
    psi: &[[f64; 9]],
    alpha: &[f64],
    beta: &[Vec<f64>],
    costs: &CostVector,
    table: &ValuationTable,
) -> (OutcomeKind, Vec<f64>) {
    let n = types.len();
    let kind = choose(types, costs, table);
    let dc = costs.incremental(kind).unwrap();
    let t = (0..n)
        .map(|i| {
            let mut ti = alpha[i] * dc - psi[i][types[i].index()];
            for j in 0..n {
                if j != i {
                    ti += beta[i][j] * psi[j][types[j].index()];
                }
            }
            ti
        })
        .collect();
    (kind, t)
}

/// Exact `(E[pi_i], sum_i Var[pi_i])` by enumeration.
pub fn exante_and_variance(
    priors: &[TypeDistribution],
    alpha: &[f64],
    beta: &[Vec<f64>],
    costs: &CostVector,
    table: &ValuationTable,
) -> (Vec<f64>, f64) {
    let n = priors.len();
    let psi = psi_table(priors, alpha, costs, table);
    let all = profiles(priors);
    let pis: Vec<(Vec<f64>, f64)> = all
        .iter()
        .map(|(types, p)| {
            let (kind, t) = payments(types, &psi, alpha, beta, costs, table);
            let pi = (0..n).map(|i| table.value(types[i], kind) - t[i]).collect();
            (pi, *p)
        })
        .collect();
    let mut mean = vec![0.0; n];
    for (pi, p) in &pis {
        for i in 0..n {
            mean[i] += p * pi[i];
        }
    }
    let mut var = 0.0;
    for (pi, p) in &pis {
        for i in 0..n {
            var += p * (pi[i] - mean[i]).powi(2);
        }
    }
    (mean, var)
}

/// Deterministic pseudo-random numbers for test inputs (SplitMix64).
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn prior(&mut self) -> TypeDistribution {
        let mut w = [0.0; 9];
        for x in &mut w {
            *x = self.uniform() + 0.01;
        }
        TypeDistribution::from_weights(w).unwrap()
    }

    pub fn comfort_type(&mut self) -> ComfortType {
        ComfortType::from_index(self.below(9))
    }

    /// Valid `(alpha, beta)` with arbitrary (possibly negative) `beta` entries.
    pub fn params(&mut self, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut alpha: Vec<f64> = (0..n).map(|_| self.uniform() + 0.05).collect();
        let s: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|a| *a /= s);
        let mut beta = vec![vec![0.0; n]; n];
        if n > 1 {
            for j in 0..n {
                let raw: Vec<f64> = (0..n).map(|_| self.range(-0.5, 1.5)).collect();
                let off: f64 = (0..n).filter(|&i| i != j).map(|i| raw[i]).sum();
                let shift = (1.0 - off) / (n - 1) as f64;
                for i in (0..n).filter(|&i| i != j) {
                    beta[i][j] = raw[i] + shift;
                }
            }
        }
        (alpha, beta)
    }

    pub fn costs(&mut self, t0: i32) -> CostVector {
        let feasible: Vec<(OutcomeKind, f64)> = OutcomeKind::ALL
            .iter()
            .map(|k| (*k, self.range(-0.08, 0.12)))
            .collect();
        // Occasionally drop an outcome to exercise the bounds.
        let drop = self.below(4);
        let kept: Vec<_> = feasible
            .into_iter()
            .enumerate()
            .filter(|(i, _)| *i != drop || *i == 1)
            .map(|(_, c)| c)
            .collect();
        CostVector::from_incremental(t0, &kept).unwrap()
    }
}

/// Two occupants: beta is forced to the swap and the equal-benefit set is a
/// single `alpha_1`. Scan alpha_1 on a 1e-3 grid, bracket the sign change of
/// the benefit gap and interpolate. Returns `(alpha_1, sum of variances)`.
pub fn pair_grid_oracle(
    priors: &[TypeDistribution],
    costs: &CostVector,
    table: &ValuationTable,
) -> Option<(f64, f64)> {
    let beta = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let grid: Vec<(f64, f64, f64)> = (0..=1000)
        .map(|k| {
            let a = k as f64 * 1e-3;
            let (mean, var) = exante_and_variance(priors, &[a, 1.0 - a], &beta, costs, table);
            (a, mean[0] - mean[1], var)
        })
        .collect();
    let w = grid
        .windows(2)
        .find(|w| w[0].1 == 0.0 || w[0].1.signum() != w[1].1.signum())?;
    let (a0, g0, v0) = w[0];
    let (_, g1, v1) = w[1];
    let s = if g0 == 0.0 { 0.0 } else { g0 / (g0 - g1) };
    Some((a0 + s * 1e-3, v0 + s * (v1 - v0)))
}

/// Interim expected net benefit of occupant `i` with true type `truth`
/// reporting `report`, by enumeration over the others.
#[allow(clippy::too_many_arguments)]
pub fn interim(
    i: usize,
    truth: ComfortType,
    report: ComfortType,
    priors: &[TypeDistribution],
    alpha: &[f64],
    beta: &[Vec<f64>],
    costs: &CostVector,
    table: &ValuationTable,
) -> f64 {
    let psi = psi_table(priors, alpha, costs, table);
    let mut others = priors.to_vec();
    others[i] = TypeDistribution::point_mass(report);
    profiles(&others)
        .into_iter()
        .map(|(types, p)| {
            let (kind, pay) = payments(&types, &psi, alpha, beta, costs, table);
            p * (table.value(truth, kind) - pay[i])
        })
        .sum()
}
