//! Independent reference implementations used as test oracles. Nothing here
//! calls into the crate's numeric code.

#![allow(dead_code)]

use foveal_core::geometry::Point;
use foveal_core::map::{FusionRule, SemanticMap};
use foveal_core::observation::ObservationModel;
use foveal_core::planner::{AcquisitionFunction, CandidateGrid};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{digamma, ln_gamma};

pub const FLOOR: f64 = 1e-6;

/// Dirichlet draw by normalized Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).unwrap().sample(rng).max(f64::MIN_POSITIVE))
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

pub fn log_pdf(alpha: &[f64], x: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let norm = ln_gamma(a0) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    norm + alpha.iter().zip(x).map(|(a, v)| (a - 1.0) * v.ln()).sum::<f64>()
}

pub fn floor_renorm(s: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = s.iter().map(|x| x.max(FLOOR)).collect();
    let t: f64 = v.iter().sum();
    v.into_iter().map(|x| x / t).collect()
}

pub fn shannon(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

pub fn argmax_low(v: &[f64]) -> usize {
    let mut b = 0;
    for i in 1..v.len() {
        if v[i] > v[b] {
            b = i;
        }
    }
    b
}

/// Upper-edge binning: first edge ≥ d, clamped to the last bin.
pub fn bin_of(edges: &[f64], d: f64) -> usize {
    edges.iter().filter(|&&e| e < d).count().min(edges.len() - 1)
}

/// Likelihood-normalized scores under the model at `bin`.
pub fn calibrate(model: &ObservationModel, raw: &[f64], bin: usize) -> Vec<f64> {
    let x = floor_renorm(raw);
    let logs: Vec<f64> = (0..model.num_channels())
        .map(|k| log_pdf(model.alpha(k, bin).as_slice(), &x))
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|v| v / t).collect()
}

pub fn entropy(alpha: &[f64]) -> f64 {
    let k = alpha.len() as f64;
    let a0: f64 = alpha.iter().sum();
    let ln_b = alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(a0);
    ln_b + (a0 - k) * digamma(a0) - alpha.iter().map(|&a| (a - 1.0) * digamma(a)).sum::<f64>()
}

pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let p0: f64 = p.iter().sum();
    let q0: f64 = q.iter().sum();
    ln_gamma(p0) - ln_gamma(q0)
        + p.iter().zip(q).map(|(&a, &b)| ln_gamma(b) - ln_gamma(a)).sum::<f64>()
        + p.iter()
            .zip(q)
            .map(|(&a, &b)| (a - b) * (digamma(a) - digamma(p0)))
            .sum::<f64>()
}

pub fn uncertainty(beta: &[f64], f: AcquisitionFunction) -> f64 {
    match f {
        AcquisitionFunction::KlGain => -kl(beta, &vec![1.0; beta.len()]),
        AcquisitionFunction::DirichletEntropy => entropy(beta),
        AcquisitionFunction::TwoPeaks => {
            let t: f64 = beta.iter().sum();
            let mut v: Vec<f64> = beta.iter().map(|b| b / t).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            -(v[0] - v[1]).abs()
        }
        AcquisitionFunction::Random => 0.0,
    }
}

/// Brute-force expected next cell state `(beta, fused log-posterior)`.
pub fn expected_cell(
    beta: &[f64],
    posterior: &[f64],
    fusions: u32,
    bin: usize,
    rule: FusionRule,
    model: &ObservationModel,
) -> Vec<f64> {
    let c = beta.len();
    let mut s_bar = vec![0.0; c];
    for (k, p) in posterior.iter().enumerate() {
        let a = model.alpha(k, bin).as_slice();
        let a0: f64 = a.iter().sum();
        for j in 0..c {
            s_bar[j] += p * a[j] / a0;
        }
    }
    let s = match rule {
        FusionRule::KaplanRaw => floor_renorm(&s_bar),
        _ => floor_renorm(&calibrate(model, &s_bar, bin)),
    };
    match rule {
        FusionRule::Sum => beta.iter().zip(&s).map(|(b, v)| b + v).collect(),
        FusionRule::KaplanRaw | FusionRule::KaplanModified => {
            let dot: f64 = beta.iter().zip(&s).map(|(b, v)| b * v).sum();
            let min = s.iter().copied().fold(f64::INFINITY, f64::min);
            beta.iter()
                .zip(&s)
                .map(|(b, v)| b * (1.0 + v / dot) / (1.0 + min / dot))
                .collect()
        }
        FusionRule::Product => {
            let w: Vec<f64> = posterior.iter().zip(&s).map(|(p, v)| p * v).collect();
            let t: f64 = w.iter().sum();
            let n = (fusions + 1) as f64;
            w.iter().map(|v| 1.0 + n * v / t).collect()
        }
    }
}

/// Exhaustive scorer: every candidate, every cell, from first principles.
pub fn brute_force_scores(
    map: &SemanticMap,
    candidates: &CandidateGrid,
    f: AcquisitionFunction,
    rule: FusionRule,
    model: &ObservationModel,
) -> Vec<f64> {
    let edges = model.binning().edges();
    candidates
        .points()
        .iter()
        .map(|cand| {
            (0..map.num_cells())
                .map(|i| {
                    let center = map.cell_center(i);
                    let d = ((center.x - cand.x).powi(2) + (center.y - cand.y).powi(2)).sqrt();
                    let beta = map.beta(i);
                    let posterior: Vec<f64> = if rule == FusionRule::Product {
                        map.posterior_at(i).into_vec()
                    } else {
                        let t: f64 = beta.iter().sum();
                        beta.iter().map(|b| b / t).collect()
                    };
                    let next = expected_cell(beta, &posterior, map.fusions(i), bin_of(edges, d), rule, model);
                    uncertainty(&next, f)
                })
                .sum()
        })
        .collect()
}

/// Minimum with a relative tie band, then lowest (y, x).
pub fn brute_force_select(
    map: &SemanticMap,
    candidates: &CandidateGrid,
    f: AcquisitionFunction,
    rule: FusionRule,
    model: &ObservationModel,
) -> Point {
    let scores = brute_force_scores(map, candidates, f, rule, model);
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let band = 1e-9 * min.abs().max(1.0);
    let mut tied: Vec<Point> = candidates
        .points()
        .iter()
        .zip(&scores)
        .filter(|(_, s)| **s <= min + band)
        .map(|(p, _)| *p)
        .collect();
    tied.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    tied[0]
}
