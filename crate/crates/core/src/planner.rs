//! Next-fixation selection by minimizing expected map uncertainty.
//!
//! For a candidate fixation every cell's next detector score is predicted as
//! the posterior-weighted mixture of the observation model's Dirichlet means
//! at the cell's distance from the candidate. Fusing that prediction once
//! gives the expected next map, whose summed per-cell uncertainty scores the
//! candidate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{in_bounds, Point};
use crate::map::{fuse_cell_slices, FusionRule, SemanticMap};
use crate::numeric::{clamp_scores, entropy_slice, kl_slice, DirichletParams, SimplexVector};
use crate::observation::{bin_log_likelihoods, ObservationModel};

/// Default candidate spacing, in map cells.
pub const DEFAULT_STRIDE_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionFunction {
    KlGain,
    DirichletEntropy,
    TwoPeaks,
    Random,
}

impl AcquisitionFunction {
    pub const ALL: [AcquisitionFunction; 4] = [
        AcquisitionFunction::KlGain,
        AcquisitionFunction::DirichletEntropy,
        AcquisitionFunction::TwoPeaks,
        AcquisitionFunction::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AcquisitionFunction::KlGain => "kl_gain",
            AcquisitionFunction::DirichletEntropy => "dirichlet_entropy",
            AcquisitionFunction::TwoPeaks => "two_peaks",
            AcquisitionFunction::Random => "random",
        }
    }
}

impl fmt::Display for AcquisitionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AcquisitionFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AcquisitionFunction::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown acquisition function '{s}'")))
    }
}

/// Finite set of fixations the planner chooses from.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    points: Vec<Point>,
}

impl CandidateGrid {
    pub fn new(points: Vec<Point>, width: u32, height: u32) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("candidate grid is empty".into()));
        }
        if let Some(p) = points.iter().find(|p| !in_bounds(**p, width, height)) {
            return Err(Error::Contract(format!(
                "candidate ({}, {}) outside {width}x{height} image",
                p.x, p.y
            )));
        }
        Ok(Self { points })
    }

    /// Centres of every `stride`-th cell, with the lattice centred on the map.
    pub fn for_map(map: &SemanticMap, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Validation("candidate stride must be positive".into()));
        }
        let col0 = ((map.cols() - 1) % stride) / 2;
        let row0 = ((map.rows() - 1) % stride) / 2;
        let mut points = Vec::new();
        for row in (row0..map.rows()).step_by(stride) {
            for col in (col0..map.cols()).step_by(stride) {
                let c = map.cell_center(map.cell_index(col, row));
                // truncated edge cells can centre on a fractional last pixel
                points.push(Point::new(
                    c.x.min(map.width() as f64 - 1.0),
                    c.y.min(map.height() as f64 - 1.0),
                ));
            }
        }
        Self::new(points, map.width(), map.height())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Posterior-weighted mixture of the model's Dirichlet means at `bin`.
#[inline]
fn predicted_into(post: &[f64], bin: usize, model: &ObservationModel, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (k, p) in post.iter().enumerate() {
        for (o, m) in out.iter_mut().zip(model.mean_slice(k, bin)) {
            *o += p * m;
        }
    }
}

/// Expected detector score of a cell observed from fovea distance `distance`.
pub fn predicted_scores(
    beta: &DirichletParams,
    distance: f64,
    model: &ObservationModel,
) -> Result<SimplexVector> {
    if beta.dim() != model.num_channels() {
        return Err(Error::Contract(format!(
            "cell has {} channels, model expects {}",
            beta.dim(),
            model.num_channels()
        )));
    }
    let post = beta.mean();
    let mut out = vec![0.0; beta.dim()];
    predicted_into(post.as_slice(), model.binning().bin_of(distance), model, &mut out);
    Ok(SimplexVector::from_vec_unchecked(out))
}

fn distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// What the rule would fuse for predicted raw scores `s` seen in `bin`:
/// calibrated first for the calibrating rules, as a real detection is.
fn fusion_scores(s: &[f64], bin: usize, rule: FusionRule, model: &ObservationModel) -> Vec<f64> {
    if rule.uses_calibration() {
        let logs = bin_log_likelihoods(s, bin, model);
        clamp_scores(SimplexVector::from_log_weights(&logs).as_slice())
    } else {
        clamp_scores(s)
    }
}

/// The map expected after fixating `candidate`: every cell fused once with
/// its predicted score.
pub fn expected_map(
    map: &SemanticMap,
    candidate: Point,
    rule: FusionRule,
    model: &ObservationModel,
) -> Result<SemanticMap> {
    if map.channels() != model.num_channels() {
        return Err(Error::Contract("map and model channel counts differ".into()));
    }
    let mut next = map.clone();
    let mut post = Vec::with_capacity(map.channels());
    let mut s = vec![0.0; map.channels()];
    for i in 0..map.num_cells() {
        let bin = model.binning().bin_of(distance(map.cell_center(i), candidate));
        map.posterior_into(i, &mut post);
        predicted_into(&post, bin, model, &mut s);
        next.fuse_cell(i, &fusion_scores(&s, bin, rule, model), rule);
    }
    Ok(next)
}

/// Uncertainty of one cell; lower is better.
pub fn uncertainty(beta: &DirichletParams, f: AcquisitionFunction) -> f64 {
    uncertainty_slice(beta.as_slice(), f)
}

pub(crate) fn uncertainty_slice(beta: &[f64], f: AcquisitionFunction) -> f64 {
    match f {
        AcquisitionFunction::KlGain => {
            let ones = vec![1.0; beta.len()];
            -kl_slice(beta, &ones)
        }
        AcquisitionFunction::DirichletEntropy => entropy_slice(beta),
        AcquisitionFunction::TwoPeaks => {
            let total: f64 = beta.iter().sum();
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for b in beta {
                if *b > first {
                    second = first;
                    first = *b;
                } else if *b > second {
                    second = *b;
                }
            }
            -((first - second) / total).abs()
        }
        AcquisitionFunction::Random => 0.0,
    }
}

/// Summed uncertainty over all cells of a map.
pub fn map_uncertainty(map: &SemanticMap, f: AcquisitionFunction) -> f64 {
    (0..map.num_cells())
        .map(|i| uncertainty_slice(map.beta(i), f))
        .sum()
}

/// Expected summed uncertainty for every candidate, in candidate order.
///
/// A cell's expected update depends on the candidate only through the
/// distance bin, so each (cell, bin) outcome is computed once and shared.
pub fn candidate_scores(
    map: &SemanticMap,
    candidates: &CandidateGrid,
    f: AcquisitionFunction,
    rule: FusionRule,
    model: &ObservationModel,
) -> Result<Vec<f64>> {
    if map.channels() != model.num_channels() {
        return Err(Error::Contract("map and model channel counts differ".into()));
    }
    let bins = model.binning().num_bins();
    let cells = map.num_cells();
    let channels = map.channels();
    let centers: Vec<Point> = (0..cells).map(|i| map.cell_center(i)).collect();

    let mut cell_bins = vec![0usize; cells * candidates.len()];
    let mut needed = vec![false; cells * bins];
    for (c, cand) in candidates.points().iter().enumerate() {
        for (i, center) in centers.iter().enumerate() {
            let b = model.binning().bin_of(distance(*center, *cand));
            cell_bins[c * cells + i] = b;
            needed[i * bins + b] = true;
        }
    }

    let mut table = vec![0.0; cells * bins];
    let mut post = Vec::with_capacity(channels);
    let mut s = vec![0.0; channels];
    let mut beta = vec![0.0; channels];
    let mut log_post = vec![0.0; channels];
    // untouched cells all hold the prior, so their outcomes are shared
    let mut prior_row: Vec<Option<f64>> = vec![None; bins];
    for i in 0..cells {
        let untouched = map.fusions(i) == 0 && map.beta(i).iter().all(|&b| b == 1.0);
        map.posterior_into(i, &mut post);
        for b in 0..bins {
            if !needed[i * bins + b] {
                continue;
            }
            if untouched {
                if let Some(v) = prior_row[b] {
                    table[i * bins + b] = v;
                    continue;
                }
            }
            predicted_into(&post, b, model, &mut s);
            let clamped = fusion_scores(&s, b, rule, model);
            beta.copy_from_slice(map.beta(i));
            log_post.copy_from_slice(map.log_post(i));
            let mut fusions = map.fusions(i);
            fuse_cell_slices(rule, &mut beta, &mut log_post, &mut fusions, &clamped);
            table[i * bins + b] = uncertainty_slice(&beta, f);
            if untouched {
                prior_row[b] = Some(table[i * bins + b]);
            }
        }
    }

    Ok((0..candidates.len())
        .map(|c| {
            (0..cells)
                .map(|i| table[i * bins + cell_bins[c * cells + i]])
                .sum()
        })
        .collect())
}

/// Relative gap below which two candidate scores count as tied. Symmetric
/// candidates sum the same cell terms in a different order, so their totals
/// can differ in the last bits.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Index of the lowest score; candidates within [`TIE_TOLERANCE`] of it go
/// to the lowest `(y, x)`.
pub(crate) fn argmin_with_tiebreak(scores: &[f64], points: &[Point]) -> usize {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_TOLERANCE * min.abs().max(1.0);
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if *s > min + slack {
            continue;
        }
        best = match best {
            Some(b) if points[b].y.total_cmp(&points[i].y).then(points[b].x.total_cmp(&points[i].x)).is_le() => Some(b),
            _ => Some(i),
        };
    }
    best.unwrap_or(0)
}

/// Next fixation: a uniform draw for [`AcquisitionFunction::Random`],
/// otherwise the candidate with the least expected summed uncertainty.
pub fn select_gaze<R: Rng + ?Sized>(
    map: &SemanticMap,
    candidates: &CandidateGrid,
    f: AcquisitionFunction,
    rule: FusionRule,
    model: &ObservationModel,
    rng: &mut R,
) -> Result<Point> {
    if candidates.is_empty() {
        return Err(Error::Contract("candidate grid is empty".into()));
    }
    if f == AcquisitionFunction::Random {
        return Ok(candidates.points()[rng.gen_range(0..candidates.len())]);
    }
    let scores = candidate_scores(map, candidates, f, rule, model)?;
    Ok(candidates.points()[argmin_with_tiebreak(&scores, candidates.points())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DistanceBinning;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dp(v: &[f64]) -> DirichletParams {
        DirichletParams::new(v.to_vec()).unwrap()
    }

    /// Class k peaks on channel k, sharper in nearer bins.
    fn peaked_model(num_classes: usize, bins: usize, radius: f64) -> ObservationModel {
        let c = num_classes + 1;
        let alphas = (0..c)
            .map(|k| {
                (0..bins)
                    .map(|b| {
                        let mut a = vec![2.0; c];
                        a[k] += 20.0 / (1.0 + b as f64);
                        dp(&a)
                    })
                    .collect()
            })
            .collect();
        ObservationModel::from_parts(
            num_classes,
            DistanceBinning::uniform(bins, radius),
            alphas,
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn uncertainty_examples() {
        assert_eq!(uncertainty(&DirichletParams::uniform(4), AcquisitionFunction::KlGain), 0.0);
        assert!((uncertainty(&dp(&[10.0, 1.0, 1.0]), AcquisitionFunction::TwoPeaks) + 0.75).abs() < 1e-12);
        assert_eq!(uncertainty(&dp(&[5.0, 5.0]), AcquisitionFunction::TwoPeaks), 0.0);
        assert!(uncertainty(&dp(&[3.0, 1.0, 2.0]), AcquisitionFunction::KlGain) < 0.0);
    }

    #[test]
    fn concentrated_cell_predicts_class_mean() {
        let model = peaked_model(2, 3, 90.0);
        let beta = dp(&[1e-6, 1e6, 1e-6]);
        let s = predicted_scores(&beta, 40.0, &model).unwrap();
        let mean = model.alpha(1, 1).mean();
        for (a, b) in s.as_slice().iter().zip(mean.as_slice()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn uniform_cell_symmetric_model_predicts_uniform() {
        let model = peaked_model(3, 4, 100.0);
        let s = predicted_scores(&DirichletParams::uniform(4), 10.0, &model).unwrap();
        for v in s.as_slice() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_sum_map_adds_one_unit_everywhere() {
        let model = peaked_model(2, 4, 100.0);
        let mut map = SemanticMap::new(64, 48, 16, 3).unwrap();
        map.set_beta(5, &dp(&[1.0, 4.0, 2.0])).unwrap();
        let next = expected_map(&map, Point::new(10.0, 10.0), FusionRule::Sum, &model).unwrap();
        for i in 0..map.num_cells() {
            let before: f64 = map.beta(i).iter().sum();
            let after: f64 = next.beta(i).iter().sum();
            assert!((after - before - 1.0).abs() < 1e-5, "cell {i}");
        }
    }

    #[test]
    fn expected_maps_mirror_for_mirrored_candidates() {
        let model = peaked_model(2, 5, 60.0);
        let mut map = SemanticMap::new(64, 32, 16, 3).unwrap();
        // left-right symmetric beliefs
        for row in 0..map.rows() {
            map.set_beta(map.cell_index(0, row), &dp(&[1.0, 3.0, 1.0])).unwrap();
            map.set_beta(map.cell_index(3, row), &dp(&[1.0, 3.0, 1.0])).unwrap();
        }
        let a = expected_map(&map, Point::new(8.0, 16.0), FusionRule::KaplanModified, &model).unwrap();
        let b = expected_map(&map, Point::new(56.0, 16.0), FusionRule::KaplanModified, &model).unwrap();
        for row in 0..map.rows() {
            for col in 0..map.cols() {
                let ia = a.cell_index(col, row);
                let ib = b.cell_index(map.cols() - 1 - col, row);
                for (x, y) in a.beta(ia).iter().zip(b.beta(ib)) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn confident_cell_barely_moves_under_modified_kaplan() {
        let model = peaked_model(2, 3, 90.0);
        let mut map = SemanticMap::new(16, 16, 16, 3).unwrap();
        map.set_beta(0, &dp(&[1.0, 400.0, 1.0])).unwrap();
        let next = expected_map(&map, Point::new(8.0, 8.0), FusionRule::KaplanModified, &model).unwrap();
        // direct evaluation: predicted score = sum_k p_k mean(alpha_k, bin 0)
        let post = [1.0 / 402.0, 400.0 / 402.0, 1.0 / 402.0];
        let mut s = [0.0; 3];
        for (k, p) in post.iter().enumerate() {
            for (j, m) in model.alpha(k, 0).mean().as_slice().iter().enumerate() {
                s[j] += p * m;
            }
        }
        // the modified rule sees calibrated scores: normalized class densities
        let point = SimplexVector::new(s.to_vec()).unwrap();
        let dens: Vec<f64> = (0..3)
            .map(|k| crate::numeric::dirichlet_log_pdf(model.alpha(k, 0), &point).unwrap().exp())
            .collect();
        let total: f64 = dens.iter().sum();
        let s: Vec<f64> = dens.iter().map(|d| (d / total).max(1e-6)).collect();
        let norm: f64 = s.iter().sum();
        let s: Vec<f64> = s.iter().map(|v| v / norm).collect();
        let dot: f64 = [1.0, 400.0, 1.0].iter().zip(&s).map(|(b, v)| b * v).sum();
        let min = s.iter().copied().fold(f64::INFINITY, f64::min);
        let expected: Vec<f64> = [1.0, 400.0, 1.0]
            .iter()
            .zip(&s)
            .map(|(b, v)| b * (1.0 + v / dot) / (1.0 + min / dot))
            .collect();
        for (a, e) in next.beta(0).iter().zip(&expected) {
            assert!((a - e).abs() < 1e-9);
        }
        let p_before = map.posterior_at(0);
        let p_after = next.posterior_at(0);
        for (a, b) in p_before.as_slice().iter().zip(p_after.as_slice()) {
            assert!((a - b).abs() < 5e-3);
        }
    }

    #[test]
    fn single_candidate_is_selected() {
        let model = peaked_model(2, 3, 90.0);
        let map = SemanticMap::new(64, 64, 16, 3).unwrap();
        let grid = CandidateGrid::new(vec![Point::new(20.0, 30.0)], 64, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for f in AcquisitionFunction::ALL {
            let p = select_gaze(&map, &grid, f, FusionRule::KaplanModified, &model, &mut rng).unwrap();
            assert_eq!(p, Point::new(20.0, 30.0));
        }
    }

    #[test]
    fn prediction_leaves_map_untouched() {
        let model = peaked_model(2, 3, 90.0);
        let mut map = SemanticMap::new(64, 64, 16, 3).unwrap();
        map.set_beta(3, &dp(&[1.0, 2.0, 5.0])).unwrap();
        let before = map.clone();
        let grid = CandidateGrid::for_map(&map, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        select_gaze(&map, &grid, AcquisitionFunction::KlGain, FusionRule::Product, &model, &mut rng)
            .unwrap();
        assert_eq!(map, before);
    }

    #[test]
    fn candidate_grid_is_inside_image() {
        let map = SemanticMap::new(100, 37, 16, 3).unwrap();
        for stride in 1..5 {
            let grid = CandidateGrid::for_map(&map, stride).unwrap();
            assert!(grid.points().iter().all(|p| in_bounds(*p, 100, 37)));
        }
        assert!(CandidateGrid::new(vec![], 10, 10).is_err());
        assert!(CandidateGrid::new(vec![Point::new(11.0, 0.0)], 10, 10).is_err());
    }

    #[test]
    fn tie_break_prefers_low_y_then_low_x() {
        let pts = [Point::new(5.0, 9.0), Point::new(9.0, 1.0), Point::new(1.0, 1.0)];
        assert_eq!(argmin_with_tiebreak(&[0.0, 0.0, 0.0], &pts), 2);
        assert_eq!(argmin_with_tiebreak(&[0.0, -1.0, 0.0], &pts), 1);
        assert_eq!(argmin_with_tiebreak(&[-1.0, -1.0 - 1e-13, -1.0], &pts), 2);
    }

    #[test]
    fn acquisition_names_round_trip() {
        for a in AcquisitionFunction::ALL {
            assert_eq!(a.as_str().parse::<AcquisitionFunction>().unwrap(), a);
        }
    }
}
