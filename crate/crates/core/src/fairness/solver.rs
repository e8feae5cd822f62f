use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{exante_net_benefits, expost_variance_sum, FairnessError, MomentCache};
use crate::mechanism::{ExpectationMode, MechanismParams};

/// Largest allowed spread of expected net benefits at a solution.
pub const EQUALITY_TOLERANCE: f64 = 1e-6;

const MAX_ITERATIONS: usize = 100_000;
const GRADIENT_TOLERANCE: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    /// Closed form, or the starting cost shares were already stationary.
    Exact,
    /// Cost shares moved under projected gradient descent.
    ProjectedGradient,
    /// Equal expected net benefits are unreachable with nonnegative cost
    /// shares; `params` is the closest point found.
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessSolution {
    pub params: MechanismParams,
    pub exante_benefits: Vec<f64>,
    pub equality_residual: f64,
    pub sum_variance: f64,
    pub baseline_exante_benefits: Vec<f64>,
    pub baseline_sum_variance: f64,
    pub solver_status: SolverStatus,
    pub iterations: usize,
    pub provenance: ExpectationMode,
}

impl FairnessSolution {
    pub fn is_feasible(&self) -> bool {
        self.solver_status != SolverStatus::Infeasible
    }

    /// Whether equal shares already equalize expected net benefits.
    pub fn baseline_feasible(&self) -> bool {
        spread(&self.baseline_exante_benefits) <= EQUALITY_TOLERANCE
    }

    /// The common expected net benefit, when feasible.
    pub fn common_benefit(&self) -> Option<f64> {
        self.is_feasible()
            .then(|| self.exante_benefits.iter().sum::<f64>() / self.exante_benefits.len() as f64)
    }
}

pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Choose `(alpha, beta)` that equalize expected net benefits and, among
/// those, minimize the summed variance of realized net benefits.
///
/// For fixed `alpha` the problem is an equality-constrained quadratic program
/// in `beta`, solved exactly through its KKT system. The reduced objective is
/// then minimized over the `alpha` simplex by projected gradient descent,
/// with the gradient taken from the KKT multipliers. Two occupants leave no
/// freedom in `beta`, and the equality pins `alpha` directly.
pub fn optimize_fairness(cache: &MomentCache) -> Result<FairnessSolution, FairnessError> {
    let n = cache.n;
    if n < 2 {
        return Err(FairnessError::TooFewOccupants(n));
    }
    let baseline = MechanismParams::standard(n);
    let baseline_exante_benefits = exante_net_benefits(cache, &baseline)?;
    let baseline_sum_variance = expost_variance_sum(cache, &baseline)?;

    let (params, status, iterations) = if n == 2 {
        solve_pair(cache)
    } else {
        solve_general(cache)
    };
    params.validate()?;
    let exante_benefits = exante_net_benefits(cache, &params)?;
    let equality_residual = spread(&exante_benefits);
    let solver_status = if equality_residual > EQUALITY_TOLERANCE {
        SolverStatus::Infeasible
    } else {
        status
    };
    Ok(FairnessSolution {
        sum_variance: expost_variance_sum(cache, &params)?,
        params,
        exante_benefits,
        equality_residual,
        baseline_exante_benefits,
        baseline_sum_variance,
        solver_status,
        iterations,
        provenance: cache.provenance,
    })
}

fn pair_params(a: f64) -> MechanismParams {
    MechanismParams::new_unchecked(vec![a, 1.0 - a], vec![vec![0.0, 1.0], vec![1.0, 0.0]])
}

/// Two occupants: `beta` is forced and `E[pi_1] - E[pi_2]` is affine in
/// `alpha_1`, so the equality has at most one root unless it holds everywhere.
fn solve_pair(cache: &MomentCache) -> (MechanismParams, SolverStatus, usize) {
    let gap = |a: f64| {
        let w = cache.weights_unchecked(&[a, 1.0 - a], &[vec![0.0, 1.0], vec![1.0, 0.0]]);
        cache.mean_of(&w[0]) - cache.mean_of(&w[1])
    };
    let (g0, g1) = (gap(0.0), gap(1.0));
    let slope = g1 - g0;
    if slope.abs() > f64::EPSILON * (g0.abs() + g1.abs()).max(1e-12) {
        let root = -g0 / slope;
        let clamped = root.clamp(0.0, 1.0);
        let status = if (root - clamped).abs() <= 1e-12 {
            SolverStatus::Exact
        } else {
            SolverStatus::Infeasible
        };
        return (pair_params(clamped), status, 0);
    }
    if g0.abs() > EQUALITY_TOLERANCE {
        return (pair_params(0.5), SolverStatus::Infeasible, 0);
    }
    // Equality holds for every alpha; the variance is quadratic in alpha_1.
    let var = |a: f64| {
        let w = cache.weights_unchecked(&[a, 1.0 - a], &[vec![0.0, 1.0], vec![1.0, 0.0]]);
        w.iter().map(|wi| cache.quad(wi, wi)).sum::<f64>()
    };
    let (v0, vh, v1) = (var(0.0), var(0.5), var(1.0));
    let curvature = 2.0 * (v0 - 2.0 * vh + v1);
    let linear = v1 - v0 - curvature / 2.0;
    let best = if curvature > 0.0 {
        (-linear / curvature).clamp(0.0, 1.0)
    } else if v0 <= v1 {
        0.0
    } else {
        1.0
    };
    (pair_params(best), SolverStatus::Exact, 0)
}

fn solve_general(cache: &MomentCache) -> (MechanismParams, SolverStatus, usize) {
    let n = cache.n;
    let mut alpha = vec![1.0 / n as f64; n];
    let Some(mut current) = InnerSolution::solve(cache, &alpha) else {
        return (MechanismParams::standard(n), SolverStatus::Infeasible, 0);
    };

    let mut step: f64 = 1.0;
    let mut moved = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let grad = current.alpha_gradient(cache, &alpha);
        let full = project_simplex(
            &alpha
                .iter()
                .zip(&grad)
                .map(|(a, g)| a - g)
                .collect::<Vec<_>>(),
        );
        let pg_norm = norm(&diff(&full, &alpha));
        if pg_norm < GRADIENT_TOLERANCE {
            break;
        }

        let mut accepted = None;
        let mut s = (step * 2.0).min(1e6);
        while s > 1e-16 {
            let trial = project_simplex(
                &alpha
                    .iter()
                    .zip(&grad)
                    .map(|(a, g)| a - s * g)
                    .collect::<Vec<_>>(),
            );
            let delta = diff(&trial, &alpha);
            let decrease: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
            if let Some(candidate) = InnerSolution::solve(cache, &trial) {
                if candidate.objective <= current.objective + ARMIJO * decrease {
                    accepted = Some((trial, candidate, s));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((trial, candidate, s)) = accepted else {
            break;
        };
        let improvement = current.objective - candidate.objective;
        alpha = trial;
        current = candidate;
        step = s;
        moved = true;
        if improvement <= 1e-15 * current.objective.abs().max(1e-12) {
            break;
        }
    }
    let status = if moved {
        SolverStatus::ProjectedGradient
    } else {
        SolverStatus::Exact
    };
    (
        MechanismParams::new_unchecked(alpha, current.beta),
        status,
        iterations,
    )
}

/// Optimal `beta` for fixed `alpha`, with the KKT multipliers.
struct InnerSolution {
    beta: Vec<Vec<f64>>,
    /// Multipliers of the `n - 1` equal-benefit rows.
    equality_multipliers: Vec<f64>,
    objective: f64,
}

impl InnerSolution {
    fn solve(cache: &MomentCache, alpha: &[f64]) -> Option<Self> {
        let n = cache.n;
        let vars = n * (n - 1);
        let col = |i: usize, j: usize| i * (n - 1) + if j < i { j } else { j - 1 };
        let zero_beta = vec![vec![0.0; n]; n];
        let base = cache.weights_unchecked(alpha, &zero_beta);
        let total: f64 = alpha.iter().sum();
        // v_j: the direction one unit of beta_ij adds to w_i.
        let v: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut vj = vec![0.0; cache.dim()];
                vj[cache.pu(j)] = -1.0;
                vj[cache.pc(j)] = total - alpha[j];
                vj
            })
            .collect();
        let vv: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|k| cache.quad(&v[j], &v[k])).collect())
            .collect();
        let vmean: Vec<f64> = v.iter().map(|vj| cache.mean_of(vj)).collect();
        let base_mean: Vec<f64> = base.iter().map(|b| cache.mean_of(b)).collect();

        let m = 2 * n - 1;
        let size = vars + m;
        let mut kkt = DMatrix::<f64>::zeros(size, size);
        let mut rhs = DVector::<f64>::zeros(size);
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let r = col(i, j);
                for k in (0..n).filter(|&k| k != i) {
                    kkt[(r, col(i, k))] = 2.0 * vv[j][k];
                }
                rhs[r] = -2.0 * cache.quad(&base[i], &v[j]);
            }
        }
        let mut put = |row: usize, var: usize, value: f64| {
            kkt[(vars + row, var)] = value;
            kkt[(var, vars + row)] = value;
        };
        for j in 0..n {
            for i in (0..n).filter(|&i| i != j) {
                put(j, col(i, j), 1.0);
            }
        }
        for r in 0..n - 1 {
            for j in (0..n).filter(|&j| j != r) {
                put(n + r, col(r, j), vmean[j]);
            }
            for j in (0..n).filter(|&j| j != r + 1) {
                put(n + r, col(r + 1, j), -vmean[j]);
            }
        }
        for j in 0..n {
            rhs[vars + j] = 1.0;
        }
        for r in 0..n - 1 {
            rhs[vars + n + r] = base_mean[r + 1] - base_mean[r];
        }

        let x = solve_kkt(&kkt, &rhs)?;
        let mut beta = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                beta[i][j] = x[col(i, j)];
            }
        }
        let w = cache.weights_unchecked(alpha, &beta);
        let means: Vec<f64> = w.iter().map(|wi| cache.mean_of(wi)).collect();
        if spread(&means) > EQUALITY_TOLERANCE * 1e-2 {
            return None;
        }
        for j in 0..n {
            let s: f64 = (0..n).filter(|&i| i != j).map(|i| beta[i][j]).sum();
            if (s - 1.0).abs() > 1e-10 {
                return None;
            }
        }
        let objective = w.iter().map(|wi| cache.quad(wi, wi)).sum();
        Some(Self {
            beta,
            equality_multipliers: (0..n - 1).map(|r| x[vars + n + r]).collect(),
            objective,
        })
    }

    /// Gradient of the reduced objective in `alpha`. Net-benefit weights are
    /// affine in `alpha` at fixed `beta`, so unit differences are exact.
    fn alpha_gradient(&self, cache: &MomentCache, alpha: &[f64]) -> Vec<f64> {
        let n = cache.n;
        let w = cache.weights_unchecked(alpha, &self.beta);
        (0..n)
            .map(|k| {
                let mut shifted = alpha.to_vec();
                shifted[k] += 1.0;
                let w2 = cache.weights_unchecked(&shifted, &self.beta);
                let dw: Vec<Vec<f64>> = w2
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                    .collect();
                let objective: f64 = (0..n).map(|i| 2.0 * cache.quad(&dw[i], &w[i])).sum();
                let constraints: f64 = (0..n - 1)
                    .map(|r| {
                        self.equality_multipliers[r]
                            * (cache.mean_of(&dw[r]) - cache.mean_of(&dw[r + 1]))
                    })
                    .sum();
                objective + constraints
            })
            .collect()
    }
}

fn solve_kkt(kkt: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = rhs.amax().max(1.0);
    let accept = |x: &DVector<f64>| (kkt * x - rhs).amax() <= 1e-10 * scale;
    if let Some(x) = kkt.clone().lu().solve(rhs) {
        if x.iter().all(|v| v.is_finite()) && accept(&x) {
            return Some(x);
        }
    }
    let svd = kkt.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    let x = svd.solve(rhs, eps).ok()?;
    accept(&x).then_some(x)
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut p: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // Remove the rounding residue so the shares sum to one.
    let residue = 1.0 - p.iter().sum::<f64>();
    if let Some(max) = p.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += residue;
    }
    p
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
