use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to score components before taking logarithms.
pub const SCORE_FLOOR: f64 = 1e-6;

/// Tolerance on the unit-sum invariant.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A probability vector: non-negative components summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation("empty simplex vector".into()));
        }
        if components.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Validation(format!(
                "simplex components must be finite and non-negative: {components:?}"
            )));
        }
        let sum: f64 = components.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Validation(format!(
                "simplex components sum to {sum}, expected 1"
            )));
        }
        Ok(Self(components))
    }

    /// Divides non-negative weights by their total.
    pub fn normalize(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Validation(format!(
                "cannot normalize weights {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Validation("weights sum to zero".into()));
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    /// Normalizes a vector of log-weights with log-sum-exp.
    pub fn from_log_weights(log_weights: &[f64]) -> Self {
        let mut out = log_weights.to_vec();
        softmax_in_place(&mut out);
        Self(out)
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0 / dim as f64; dim])
    }

    /// Builds the vector without checking; callers guarantee the invariant.
    pub(crate) fn from_vec_unchecked(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest component; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Shannon entropy in nats.
    pub fn shannon_entropy(&self) -> f64 {
        self.0
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    /// Raises components below [`SCORE_FLOOR`] to the floor and renormalizes.
    pub fn clamped(&self) -> SimplexVector {
        SimplexVector(clamp_scores(&self.0))
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(s: SimplexVector) -> Self {
        s.0
    }
}

impl AsRef<[f64]> for SimplexVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn clamp_scores(s: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = s.iter().map(|c| c.max(SCORE_FLOOR)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|c| *c /= total);
    out
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let lse = log_sum_exp(v);
    v.iter_mut().for_each(|x| *x = (*x - lse).exp());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sums_and_negatives() {
        assert!(SimplexVector::new(vec![0.5, 0.4]).is_err());
        assert!(SimplexVector::new(vec![1.2, -0.2]).is_err());
        assert!(SimplexVector::new(vec![]).is_err());
        assert!(SimplexVector::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn clamping_removes_exact_zeros() {
        let s = SimplexVector::new(vec![1.0, 0.0, 0.0]).unwrap().clamped();
        assert!(s.as_slice().iter().all(|c| *c > 0.0));
        assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_weights_normalize_without_overflow() {
        let s = SimplexVector::from_log_weights(&[-1000.0, -1000.0 + 2f64.ln()]);
        assert!((s.as_slice()[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.3, 0.3, 0.2]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }
}
