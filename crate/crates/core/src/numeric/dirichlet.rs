//! Dirichlet distribution primitives.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::simplex::{clamp_scores, softmax_in_place, SimplexVector};
use super::special::{digamma_unchecked, inverse_digamma, ln_gamma};
use crate::error::{Error, Result};

/// Concentration parameters of a Dirichlet distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::Validation(format!(
                "Dirichlet needs at least 2 components, got {}",
                alpha.len()
            )));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::Validation(format!(
                "Dirichlet concentrations must be finite and positive: {alpha:?}"
            )));
        }
        Ok(Self(alpha))
    }

    /// The flat Dirichlet with every concentration equal to one.
    pub fn uniform(dim: usize) -> Self {
        assert!(dim >= 2, "Dirichlet dimension must be at least 2");
        Self(vec![1.0; dim])
    }

    pub(crate) fn from_vec_unchecked(alpha: Vec<f64>) -> Self {
        Self(alpha)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Expected value of the distribution, `alpha / sum(alpha)`.
    pub fn mean(&self) -> SimplexVector {
        let total = self.total();
        SimplexVector::from_vec_unchecked(self.0.iter().map(|a| a / total).collect())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for DirichletParams {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DirichletParams> for Vec<f64> {
    fn from(p: DirichletParams) -> Self {
        p.0
    }
}

fn check_dims(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Contract(format!(
            "{what}: dimension mismatch ({a} vs {b})"
        )));
    }
    Ok(())
}

/// Log of the multivariate Beta function, `sum lnΓ(a_k) − lnΓ(sum a_k)`.
pub(crate) fn ln_beta(alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>() - ln_gamma(total)
}

/// Log-density on already clamped, strictly positive points.
pub(crate) fn log_pdf_slice(alpha: &[f64], point: &[f64]) -> f64 {
    let kernel: f64 = alpha
        .iter()
        .zip(point)
        .map(|(a, s)| (a - 1.0) * s.ln())
        .sum();
    kernel - ln_beta(alpha)
}

/// Log-density of `Dir(params)` at `point`.
///
/// The point is floored at 1e-6 per component and renormalized first so that
/// exact zeros from a detector do not produce `-inf`.
pub fn dirichlet_log_pdf(params: &DirichletParams, point: &SimplexVector) -> Result<f64> {
    check_dims(params.dim(), point.len(), "dirichlet_log_pdf")?;
    let clamped = clamp_scores(point.as_slice());
    Ok(log_pdf_slice(params.as_slice(), &clamped))
}

pub(crate) fn entropy_slice(alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let dim = alpha.len() as f64;
    ln_beta(alpha) + (total - dim) * digamma_unchecked(total)
        - alpha
            .iter()
            .map(|a| (a - 1.0) * digamma_unchecked(*a))
            .sum::<f64>()
}

/// Differential entropy of `Dir(params)` in nats.
pub fn dirichlet_entropy(params: &DirichletParams) -> f64 {
    entropy_slice(params.as_slice())
}

pub(crate) fn kl_slice(p: &[f64], q: &[f64]) -> f64 {
    let p_total: f64 = p.iter().sum();
    let q_total: f64 = q.iter().sum();
    let psi_total = digamma_unchecked(p_total);
    let mut value = ln_gamma(p_total) - ln_gamma(q_total);
    for (pk, qk) in p.iter().zip(q) {
        value += ln_gamma(*qk) - ln_gamma(*pk) + (pk - qk) * (digamma_unchecked(*pk) - psi_total);
    }
    // cancellation can leave a tiny negative residue at p == q
    value.max(0.0)
}

/// `KL(Dir(p) || Dir(q))`.
pub fn dirichlet_kl(p: &DirichletParams, q: &DirichletParams) -> Result<f64> {
    check_dims(p.dim(), q.dim(), "dirichlet_kl")?;
    Ok(kl_slice(p.as_slice(), q.as_slice()))
}

/// Draws one point from `Dir(params)` by normalizing independent Gamma draws.
///
/// Components with `alpha < 1` are drawn in log space through
/// `Gamma(a) = Gamma(a + 1) * U^(1/a)`, so small concentrations cannot
/// underflow the whole vector to zero.
pub fn dirichlet_sample<R: Rng + ?Sized>(params: &DirichletParams, rng: &mut R) -> SimplexVector {
    let mut logs: Vec<f64> = params
        .as_slice()
        .iter()
        .map(|&a| {
            if a < 1.0 {
                let g = Gamma::new(a + 1.0, 1.0).expect("positive shape");
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                g.sample(rng).ln() + u.ln() / a
            } else {
                let g = Gamma::new(a, 1.0).expect("positive shape");
                g.sample(rng).ln()
            }
        })
        .collect();
    softmax_in_place(&mut logs);
    SimplexVector::from_vec_unchecked(logs)
}

pub const MLE_TOLERANCE: f64 = 1e-7;
pub const MLE_MAX_ITERATIONS: usize = 1000;

/// Outcome of a maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletFit {
    /// Last iterate; the MLE when `converged` is set.
    pub params: DirichletParams,
    pub converged: bool,
    pub iterations: usize,
}

/// Maximum-likelihood Dirichlet fit with Minka's fixed-point iteration.
///
/// Starts from the moment-matching estimate and iterates
/// `ψ(α_k) ← ψ(Σα) + mean(log s_k)` until the largest relative step is below
/// 1e-7. Degenerate data (no spread) has no finite MLE; the fit then runs out
/// of iterations and is returned with `converged = false`.
pub fn fit_dirichlet_mle(samples: &[SimplexVector]) -> Result<DirichletFit> {
    if samples.len() < 2 {
        return Err(Error::Contract(format!(
            "need at least 2 samples to fit a Dirichlet, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if dim < 2 {
        return Err(Error::Contract("samples must have at least 2 components".into()));
    }
    if let Some(bad) = samples.iter().position(|s| s.len() != dim) {
        return Err(Error::Contract(format!(
            "sample {bad} has dimension {} (expected {dim})",
            samples[bad].len()
        )));
    }

    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut mean_sq = vec![0.0; dim];
    let mut mean_log = vec![0.0; dim];
    for s in samples {
        let c = clamp_scores(s.as_slice());
        for k in 0..dim {
            mean[k] += c[k] / n;
            mean_sq[k] += c[k] * c[k] / n;
            mean_log[k] += c[k].ln() / n;
        }
    }

    let mut alpha = moment_match(&mean, &mean_sq);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MLE_MAX_ITERATIONS {
        iterations += 1;
        let psi_total = digamma_unchecked(alpha.iter().sum());
        let mut max_rel = 0.0f64;
        for k in 0..dim {
            let next = inverse_digamma(psi_total + mean_log[k]);
            max_rel = max_rel.max((next - alpha[k]).abs() / alpha[k]);
            alpha[k] = next;
        }
        if max_rel < MLE_TOLERANCE {
            converged = true;
            break;
        }
    }

    Ok(DirichletFit {
        params: DirichletParams::from_vec_unchecked(alpha),
        converged,
        iterations,
    })
}

/// Precision estimate from first and second moments, averaged over components.
fn moment_match(mean: &[f64], mean_sq: &[f64]) -> Vec<f64> {
    const FALLBACK_PRECISION: f64 = 1e3;
    let mut estimates = Vec::with_capacity(mean.len());
    for (m, m2) in mean.iter().zip(mean_sq) {
        let var = m2 - m * m;
        if var > 1e-12 {
            let precision = (m - m2) / var;
            if precision.is_finite() && precision > 0.0 {
                estimates.push(precision);
            }
        }
    }
    let precision = if estimates.is_empty() {
        FALLBACK_PRECISION
    } else {
        (estimates.iter().sum::<f64>() / estimates.len() as f64).min(1e6)
    };
    mean.iter().map(|m| (m * precision).max(1e-3)).collect()
}
