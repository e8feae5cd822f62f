use serde::{Deserialize, Serialize};

use super::MechanismError;

pub const PARAM_TOLERANCE: f64 = 1e-9;

/// Cost shares `alpha` and externality redistribution weights `beta`.
///
/// `beta[i][j]` is the share of occupant `j`'s expected externality that
/// occupant `i` pays back. Valid parameters have `sum(alpha) = 1`,
/// `alpha >= 0`, a zero diagonal, and every column of `beta` summing to one
/// over its off-diagonal entries.
///
/// Deserialization does not validate; call [`MechanismParams::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
}

impl MechanismParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<Vec<f64>>) -> Result<Self, MechanismError> {
        let params = Self { alpha, beta };
        params.validate()?;
        Ok(params)
    }

    /// Parameters that may violate the invariants, for audits and negative
    /// controls.
    pub fn new_unchecked(alpha: Vec<f64>, beta: Vec<Vec<f64>>) -> Self {
        Self { alpha, beta }
    }

    /// Equal cost shares and equal redistribution: the standard AGV rule.
    pub fn standard(n: usize) -> Self {
        assert!(n >= 1);
        let alpha = vec![1.0 / n as f64; n];
        let off = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
        let beta = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { off }).collect())
            .collect();
        Self { alpha, beta }
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        let n = self.alpha.len();
        let violation = |msg: String| Err(MechanismError::ConstraintViolation(msg));
        if n == 0 {
            return violation("alpha is empty".into());
        }
        if self.beta.len() != n || self.beta.iter().any(|row| row.len() != n) {
            return violation(format!("beta must be {n}x{n}"));
        }
        if let Some((i, a)) = self
            .alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !a.is_finite() || **a < 0.0)
        {
            return violation(format!("alpha[{i}] = {a} must be >= 0"));
        }
        let sum = self.alpha_sum();
        if (sum - 1.0).abs() > PARAM_TOLERANCE {
            return violation(format!("sum(alpha) = {sum}, expected 1"));
        }
        for i in 0..n {
            if self.beta[i][i] != 0.0 {
                return violation(format!("beta[{i}][{i}] = {} must be 0", self.beta[i][i]));
            }
        }
        if n > 1 {
            for j in 0..n {
                let col: f64 = (0..n).filter(|&i| i != j).map(|i| self.beta[i][j]).sum();
                if !col.is_finite() || (col - 1.0).abs() > PARAM_TOLERANCE {
                    return violation(format!("column {j} of beta sums to {col}, expected 1"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_params_are_valid() {
        for n in 1..=6 {
            MechanismParams::standard(n).validate().unwrap();
        }
    }

    #[test]
    fn violations_name_the_constraint() {
        let mut p = MechanismParams::standard(3);
        p.alpha[0] = 0.5;
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("sum(alpha)"), "{msg}");

        let mut p = MechanismParams::standard(3);
        p.beta[0][1] = 1.0;
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("column 1"), "{msg}");

        let mut p = MechanismParams::standard(2);
        p.alpha = vec![1.5, -0.5];
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("alpha[1]"), "{msg}");

        let mut p = MechanismParams::standard(2);
        p.beta[1][1] = 0.1;
        assert!(p.validate().unwrap_err().to_string().contains("beta[1][1]"));
    }
}
