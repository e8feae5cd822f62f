use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FairnessError, PriorSet};
use crate::energy::CostVector;
use crate::mechanism::{
    for_each_profile, profile_count, ComfortType, ExpectationMode, ExternalityTables,
    MechanismError, MechanismParams, OccupantId, OutcomeSelector, TypeDistribution, ValuationTable,
    EXHAUSTIVE_LIMIT,
};

/// First and second moments of the random basis behind every occupant's net
/// benefit.
///
/// For a realized profile the basis vector is
/// `Z = (u_1..u_n, dC, Pu_1..Pu_n, PC_1..PC_n)` where `u_i` is occupant
/// `i`'s valuation of the chosen outcome, `dC` its incremental cost, and
/// `Pu_i`, `PC_i` the valuation and cost parts of `i`'s expected externality.
/// Net benefits are `pi_i = w_i(alpha, beta) . Z`, so their means and
/// covariances follow from `mean` and `cov` for any parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCache {
    pub n: usize,
    pub mean: Vec<f64>,
    /// Row-major `dim x dim` covariance.
    pub cov: Vec<f64>,
    /// Standard errors of `mean` when sampled.
    pub mean_se: Option<Vec<f64>>,
    pub provenance: ExpectationMode,
    pub tables: ExternalityTables,
}

impl MomentCache {
    pub fn compute(
        priors: &[TypeDistribution],
        costs: &CostVector,
        table: &ValuationTable,
        mode: ExpectationMode,
    ) -> Result<Self, FairnessError> {
        let n = priors.len();
        if n < 2 {
            return Err(FairnessError::TooFewOccupants(n));
        }
        let selector = OutcomeSelector::new(costs)?;
        let small = matches!(profile_count(n), Some(c) if c <= EXHAUSTIVE_LIMIT);
        match mode {
            ExpectationMode::Exhaustive => {
                if !small {
                    return Err(MechanismError::StateSpaceOverflow { n }.into());
                }
                let tables = ExternalityTables::exhaustive(priors, &selector, table)?;
                Ok(exhaustive_moments(priors, &selector, table, tables))
            }
            ExpectationMode::MonteCarlo { samples, seed } => {
                let tables = if small {
                    ExternalityTables::exhaustive(priors, &selector, table)?
                } else {
                    ExternalityTables::sampled(
                        priors,
                        &selector,
                        table,
                        samples,
                        seed.wrapping_add(TABLE_SEED_OFFSET),
                    )
                };
                Ok(sampled_moments(
                    priors, &selector, table, tables, samples, seed,
                ))
            }
        }
    }

    pub fn dim(&self) -> usize {
        3 * self.n + 1
    }

    pub fn u(&self, i: usize) -> usize {
        i
    }

    pub fn d(&self) -> usize {
        self.n
    }

    pub fn pu(&self, i: usize) -> usize {
        self.n + 1 + i
    }

    pub fn pc(&self, i: usize) -> usize {
        2 * self.n + 1 + i
    }

    pub fn cov_at(&self, a: usize, b: usize) -> f64 {
        self.cov[a * self.dim() + b]
    }

    pub fn expected_cost(&self) -> f64 {
        self.mean[self.d()]
    }

    pub fn expected_valuation(&self, i: usize) -> f64 {
        self.mean[self.u(i)]
    }

    /// `E[psi_i]` under cost shares `alpha`.
    pub fn expected_externality(&self, i: usize, alpha: &[f64]) -> f64 {
        let others: f64 = alpha.iter().sum::<f64>() - alpha[i];
        self.mean[self.pu(i)] - others * self.mean[self.pc(i)]
    }

    /// Coefficients of each `pi_i` on the basis `Z`.
    pub fn weights(&self, params: &MechanismParams) -> Result<Vec<Vec<f64>>, FairnessError> {
        self.check(params)?;
        Ok(self.weights_unchecked(&params.alpha, &params.beta))
    }

    pub(crate) fn weights_unchecked(&self, alpha: &[f64], beta: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.n;
        let total: f64 = alpha.iter().sum();
        (0..n)
            .map(|i| {
                let mut w = vec![0.0; self.dim()];
                w[self.u(i)] = 1.0;
                w[self.d()] = -alpha[i];
                w[self.pu(i)] = 1.0;
                w[self.pc(i)] = -(total - alpha[i]);
                for j in (0..n).filter(|&j| j != i) {
                    w[self.pu(j)] = -beta[i][j];
                    w[self.pc(j)] = beta[i][j] * (total - alpha[j]);
                }
                w
            })
            .collect()
    }

    pub(crate) fn mean_of(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.mean).map(|(a, b)| a * b).sum()
    }

    pub(crate) fn quad(&self, a: &[f64], b: &[f64]) -> f64 {
        let dim = self.dim();
        let mut total = 0.0;
        for (r, ar) in a.iter().enumerate() {
            if *ar == 0.0 {
                continue;
            }
            let row = &self.cov[r * dim..(r + 1) * dim];
            total += ar * row.iter().zip(b).map(|(c, bc)| c * bc).sum::<f64>();
        }
        total
    }

    /// Per-occupant `Var[pi_i]`.
    pub fn variances(&self, params: &MechanismParams) -> Result<Vec<f64>, FairnessError> {
        Ok(self
            .weights(params)?
            .iter()
            .map(|w| self.quad(w, w).max(0.0))
            .collect())
    }

    fn check(&self, params: &MechanismParams) -> Result<(), FairnessError> {
        if params.n() != self.n
            || params.beta.len() != self.n
            || params.beta.iter().any(|r| r.len() != self.n)
        {
            return Err(FairnessError::DimensionMismatch {
                expected: self.n,
                found: params.n(),
            });
        }
        Ok(())
    }
}

const TABLE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn build_moment_cache(
    priors: &PriorSet,
    occupants: &[OccupantId],
    t0_c: i32,
    costs: &CostVector,
    table: &ValuationTable,
    mode: ExpectationMode,
) -> Result<MomentCache, FairnessError> {
    let dists = priors.for_occupants(occupants, t0_c)?;
    MomentCache::compute(&dists, costs, table, mode)
}

/// `E[pi_i]` for every occupant.
pub fn exante_net_benefits(
    cache: &MomentCache,
    params: &MechanismParams,
) -> Result<Vec<f64>, FairnessError> {
    Ok(cache
        .weights(params)?
        .iter()
        .map(|w| cache.mean_of(w))
        .collect())
}

/// `sum_i Var[pi_i]`.
pub fn expost_variance_sum(
    cache: &MomentCache,
    params: &MechanismParams,
) -> Result<f64, FairnessError> {
    Ok(cache.variances(params)?.iter().sum())
}

fn basis(
    types: &[usize],
    selector: &OutcomeSelector,
    table: &ValuationTable,
    tables: &ExternalityTables,
    z: &mut [f64],
) {
    let n = types.len();
    let mut sums = [0.0; 3];
    for &t in types {
        let row = table.row(ComfortType::from_index(t));
        for k in 0..3 {
            sums[k] += row[k];
        }
    }
    let kind = selector.choose(&sums);
    for (i, &t) in types.iter().enumerate() {
        z[i] = table.value(ComfortType::from_index(t), kind);
        z[n + 1 + i] = tables.value_part[i][t];
        z[2 * n + 1 + i] = tables.cost_part[i][t];
    }
    z[n] = selector.incremental(kind);
}

fn exhaustive_moments(
    priors: &[TypeDistribution],
    selector: &OutcomeSelector,
    table: &ValuationTable,
    tables: ExternalityTables,
) -> MomentCache {
    let n = priors.len();
    let dim = 3 * n + 1;
    let mut z = vec![0.0; dim];
    let prob =
        |idx: &[usize]| -> f64 { idx.iter().zip(priors).map(|(&t, p)| p.probs()[t]).product() };

    let mut mean = vec![0.0; dim];
    for_each_profile(n, |idx| {
        let p = prob(idx);
        if p == 0.0 {
            return;
        }
        basis(idx, selector, table, &tables, &mut z);
        for (m, v) in mean.iter_mut().zip(&z) {
            *m += p * v;
        }
    });

    let mut cov = vec![0.0; dim * dim];
    for_each_profile(n, |idx| {
        let p = prob(idx);
        if p == 0.0 {
            return;
        }
        basis(idx, selector, table, &tables, &mut z);
        for (v, m) in z.iter_mut().zip(&mean) {
            *v -= m;
        }
        accumulate_outer(&mut cov, &z, p);
    });
    symmetrize(&mut cov, dim);

    MomentCache {
        n,
        mean,
        cov,
        mean_se: None,
        provenance: ExpectationMode::Exhaustive,
        tables,
    }
}

fn sampled_moments(
    priors: &[TypeDistribution],
    selector: &OutcomeSelector,
    table: &ValuationTable,
    tables: ExternalityTables,
    samples: usize,
    seed: u64,
) -> MomentCache {
    let n = priors.len();
    let dim = 3 * n + 1;
    let samples = samples.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let mut z = vec![0.0; dim];
    let mut draws = Vec::with_capacity(samples * dim);
    for _ in 0..samples {
        for (slot, prior) in idx.iter_mut().zip(priors) {
            *slot = prior.sample_with(rng.random::<f64>()).index();
        }
        basis(&idx, selector, table, &tables, &mut z);
        draws.extend_from_slice(&z);
    }

    let mut mean = vec![0.0; dim];
    for row in draws.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= samples as f64;
    }
    let mut cov = vec![0.0; dim * dim];
    let weight = 1.0 / (samples - 1) as f64;
    for row in draws.chunks_exact(dim) {
        for ((c, v), m) in z.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        accumulate_outer(&mut cov, &z, weight);
    }
    symmetrize(&mut cov, dim);
    let mean_se = (0..dim)
        .map(|k| (cov[k * dim + k] / samples as f64).sqrt())
        .collect();

    MomentCache {
        n,
        mean,
        cov,
        mean_se: Some(mean_se),
        provenance: ExpectationMode::MonteCarlo { samples, seed },
        tables,
    }
}

fn accumulate_outer(cov: &mut [f64], z: &[f64], weight: f64) {
    let dim = z.len();
    for a in 0..dim {
        let wa = weight * z[a];
        if wa == 0.0 {
            continue;
        }
        for b in a..dim {
            cov[a * dim + b] += wa * z[b];
        }
    }
}

fn symmetrize(cov: &mut [f64], dim: usize) {
    for a in 0..dim {
        for b in 0..a {
            cov[a * dim + b] = cov[b * dim + a];
        }
    }
}

/// Number of basis coordinates for `n` occupants.
pub fn basis_dim(n: usize) -> usize {
    3 * n + 1
}
