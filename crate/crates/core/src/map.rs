//! Body-centred semantic belief grid and the sequential fusion rules.
//!
//! Each cell holds Dirichlet concentrations over the K+1 classes, starting
//! from the flat all-ones prior. The product rule additionally keeps a
//! normalized log-posterior per cell; its concentrations are then the
//! pseudo-counts `1 + n * p` after `n` fusions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::{BoundingBox, Detection};
use crate::error::{Error, Result};
use crate::geometry::{fovea_distance, GazeState, Point};
use crate::numeric::{
    argmax, clamp_scores, entropy_slice, kl_slice, log_sum_exp, DirichletParams, SimplexVector,
};
use crate::observation::{calibrate, ObservationModel};

pub const DEFAULT_CELL_SIZE: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    Product,
    Sum,
    KaplanRaw,
    KaplanModified,
}

impl FusionRule {
    pub const ALL: [FusionRule; 4] = [
        FusionRule::Product,
        FusionRule::Sum,
        FusionRule::KaplanRaw,
        FusionRule::KaplanModified,
    ];

    /// Whether detector scores pass through the observation model first.
    pub fn uses_calibration(self) -> bool {
        !matches!(self, FusionRule::KaplanRaw)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FusionRule::Product => "product",
            FusionRule::Sum => "sum",
            FusionRule::KaplanRaw => "kaplan_raw",
            FusionRule::KaplanModified => "kaplan_modified",
        }
    }
}

impl fmt::Display for FusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionRule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown fusion rule '{s}'")))
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Contract(format!("dimension mismatch ({a} vs {b})")));
    }
    Ok(())
}

/// Expected class probabilities of a cell, `beta / sum(beta)`.
pub fn posterior(beta: &DirichletParams) -> SimplexVector {
    beta.mean()
}

/// Naive-Bayes step: `M'_k ∝ s_k M_k`.
pub fn fuse_product(prior: &SimplexVector, likelihood: &SimplexVector) -> Result<SimplexVector> {
    check_dims(prior.len(), likelihood.len())?;
    let s = clamp_scores(likelihood.as_slice());
    let logs: Vec<f64> = prior
        .as_slice()
        .iter()
        .zip(&s)
        .map(|(p, l)| p.ln() + l.ln())
        .collect();
    Ok(SimplexVector::from_log_weights(&logs))
}

/// Sum rule: `beta_k + s_k`.
pub fn fuse_sum(beta: &DirichletParams, scores: &SimplexVector) -> Result<DirichletParams> {
    check_dims(beta.dim(), scores.len())?;
    let mut out = beta.as_slice().to_vec();
    sum_in_place(&mut out, &clamp_scores(scores.as_slice()));
    Ok(DirichletParams::from_vec_unchecked(out))
}

/// Kaplan's moment-matched Dirichlet update.
///
/// `beta_k (1 + s_k / <beta, s>) / (1 + min_j s_j / <beta, s>)`. Fed raw
/// detector scores this is the original rule; fed calibrated scores it is the
/// modified rule.
pub fn fuse_kaplan(beta: &DirichletParams, scores: &SimplexVector) -> Result<DirichletParams> {
    check_dims(beta.dim(), scores.len())?;
    let mut out = beta.as_slice().to_vec();
    kaplan_in_place(&mut out, &clamp_scores(scores.as_slice()));
    Ok(DirichletParams::from_vec_unchecked(out))
}

#[inline]
pub(crate) fn sum_in_place(beta: &mut [f64], s: &[f64]) {
    for (b, v) in beta.iter_mut().zip(s) {
        *b += v;
    }
}

#[inline]
pub(crate) fn kaplan_in_place(beta: &mut [f64], s: &[f64]) {
    let dot: f64 = beta.iter().zip(s).map(|(b, v)| b * v).sum();
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let denom = 1.0 + min / dot;
    for (b, v) in beta.iter_mut().zip(s) {
        *b = *b * (1.0 + v / dot) / denom;
    }
}

/// One fusion of clamped scores `s` into a cell's storage.
#[inline]
pub(crate) fn fuse_cell_slices(
    rule: FusionRule,
    beta: &mut [f64],
    log_post: &mut [f64],
    fusions: &mut u32,
    s: &[f64],
) {
    match rule {
        FusionRule::Sum => sum_in_place(beta, s),
        FusionRule::KaplanRaw | FusionRule::KaplanModified => kaplan_in_place(beta, s),
        FusionRule::Product => {
            for (l, v) in log_post.iter_mut().zip(s) {
                *l += v.ln();
            }
            let lse = log_sum_exp(log_post);
            log_post.iter_mut().for_each(|l| *l -= lse);
            let n = (*fusions + 1) as f64;
            for (b, l) in beta.iter_mut().zip(log_post.iter()) {
                *b = 1.0 + n * l.exp();
            }
        }
    }
    *fusions += 1;
}

/// Grid of Dirichlet cells covering an image.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    cell_size: u32,
    width: u32,
    height: u32,
    cols: usize,
    rows: usize,
    channels: usize,
    betas: Vec<f64>,
    log_post: Vec<f64>,
    fusions: Vec<u32>,
    product_mode: bool,
}

/// JSON snapshot of a map's concentrations, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub cell_size: u32,
    pub width_cells: usize,
    pub height_cells: usize,
    pub betas: Vec<Vec<f64>>,
}

impl SemanticMap {
    /// Flat-prior map over a `width` × `height` image with `channels` = K+1.
    pub fn new(width: u32, height: u32, cell_size: u32, channels: usize) -> Result<Self> {
        if width == 0 || height == 0 || cell_size == 0 {
            return Err(Error::Validation(
                "map extent and cell size must be positive".into(),
            ));
        }
        if channels < 2 {
            return Err(Error::Validation("map needs at least 2 channels".into()));
        }
        let cols = width.div_ceil(cell_size) as usize;
        let rows = height.div_ceil(cell_size) as usize;
        let n = cols * rows;
        let uniform_log = -(channels as f64).ln();
        Ok(Self {
            cell_size,
            width,
            height,
            cols,
            rows,
            channels,
            betas: vec![1.0; n * channels],
            log_post: vec![uniform_log; n * channels],
            fusions: vec![0; n],
            product_mode: false,
        })
    }

    pub fn cell_size(&self) -> u32 {
        self.cell_size
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_cells(&self) -> usize {
        self.cols * self.rows
    }

    pub fn cell_index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    /// Pixel span `[x0, x1) × [y0, y1)`; edge cells may be truncated.
    pub fn cell_span(&self, index: usize) -> (f64, f64, f64, f64) {
        let (col, row) = (index % self.cols, index / self.cols);
        let cs = self.cell_size as f64;
        let x0 = col as f64 * cs;
        let y0 = row as f64 * cs;
        (
            x0,
            y0,
            (x0 + cs).min(self.width as f64),
            (y0 + cs).min(self.height as f64),
        )
    }

    pub fn cell_center(&self, index: usize) -> Point {
        let (x0, y0, x1, y1) = self.cell_span(index);
        Point::new(0.5 * (x0 + x1), 0.5 * (y0 + y1))
    }

    pub fn beta(&self, index: usize) -> &[f64] {
        &self.betas[index * self.channels..(index + 1) * self.channels]
    }

    pub fn cell_params(&self, index: usize) -> DirichletParams {
        DirichletParams::from_vec_unchecked(self.beta(index).to_vec())
    }

    /// Overwrites one cell's concentrations.
    pub fn set_beta(&mut self, index: usize, beta: &DirichletParams) -> Result<()> {
        check_dims(beta.dim(), self.channels)?;
        let c = self.channels;
        self.betas[index * c..(index + 1) * c].copy_from_slice(beta.as_slice());
        Ok(())
    }

    pub fn fusions(&self, index: usize) -> u32 {
        self.fusions[index]
    }

    /// Class posterior of a cell; exact product-rule posterior when the map
    /// is fused with the product rule.
    pub fn posterior_at(&self, index: usize) -> SimplexVector {
        let mut out = Vec::with_capacity(self.channels);
        self.posterior_into(index, &mut out);
        SimplexVector::from_vec_unchecked(out)
    }

    pub(crate) fn posterior_into(&self, index: usize, out: &mut Vec<f64>) {
        out.clear();
        let c = self.channels;
        if self.product_mode {
            out.extend(self.log_post[index * c..(index + 1) * c].iter().map(|l| l.exp()));
        } else {
            let beta = self.beta(index);
            let total: f64 = beta.iter().sum();
            out.extend(beta.iter().map(|b| b / total));
        }
    }

    pub fn argmax_at(&self, index: usize) -> usize {
        let mut buf = Vec::with_capacity(self.channels);
        self.posterior_into(index, &mut buf);
        argmax(&buf)
    }

    /// Applies one already-clamped score vector to one cell.
    pub(crate) fn fuse_cell(&mut self, index: usize, s: &[f64], rule: FusionRule) {
        let c = self.channels;
        if rule == FusionRule::Product {
            self.product_mode = true;
        }
        fuse_cell_slices(
            rule,
            &mut self.betas[index * c..(index + 1) * c],
            &mut self.log_post[index * c..(index + 1) * c],
            &mut self.fusions[index],
            s,
        );
    }

    /// Cells whose pixel span overlaps the box with positive area.
    pub fn cells_touching(&self, bbox: &BoundingBox) -> Vec<usize> {
        let cs = self.cell_size as f64;
        let c0 = (bbox.x_min / cs).floor().max(0.0) as usize;
        let r0 = (bbox.y_min / cs).floor().max(0.0) as usize;
        let c1 = ((bbox.x_max / cs).ceil().max(0.0) as usize).min(self.cols);
        let r1 = ((bbox.y_max / cs).ceil().max(0.0) as usize).min(self.rows);
        let mut out = Vec::new();
        for row in r0..r1 {
            for col in c0..c1 {
                let idx = self.cell_index(col, row);
                let (x0, y0, x1, y1) = self.cell_span(idx);
                if bbox.x_min < x1 && bbox.x_max > x0 && bbox.y_min < y1 && bbox.y_max > y0 {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Scores a detection feeds into the map: calibrated at its box-centre
    /// distance, or the clamped raw scores for the raw Kaplan rule.
    pub fn fusion_input(
        detection: &Detection,
        gaze: &GazeState,
        rule: FusionRule,
        model: &ObservationModel,
    ) -> Result<Vec<f64>> {
        if rule.uses_calibration() {
            let d = fovea_distance(detection.bbox.center(), gaze);
            Ok(clamp_scores(calibrate(&detection.scores, d, model)?.as_slice()))
        } else {
            if detection.scores.len() != model.num_channels() {
                return Err(Error::Contract(format!(
                    "detection has {} scores, model expects {}",
                    detection.scores.len(),
                    model.num_channels()
                )));
            }
            Ok(clamp_scores(detection.scores.as_slice()))
        }
    }

    /// Fuses one detection into every cell it overlaps; returns those cells.
    pub fn fuse_detection(
        &mut self,
        detection: &Detection,
        gaze: &GazeState,
        rule: FusionRule,
        model: &ObservationModel,
    ) -> Result<Vec<usize>> {
        check_dims(model.num_channels(), self.channels)?;
        let s = Self::fusion_input(detection, gaze, rule, model)?;
        let cells = self.cells_touching(&detection.bbox);
        for &i in &cells {
            self.fuse_cell(i, &s, rule);
        }
        Ok(cells)
    }

    /// Fuses a frame's detections in order.
    pub fn update_map(
        &mut self,
        detections: &[Detection],
        gaze: &GazeState,
        rule: FusionRule,
        model: &ObservationModel,
    ) -> Result<()> {
        for det in detections {
            self.fuse_detection(det, gaze, rule, model)?;
        }
        Ok(())
    }

    /// Sum over cells of `KL(Dir(beta) || Dir(1))`.
    pub fn total_kl_from_prior(&self) -> f64 {
        let ones = vec![1.0; self.channels];
        (0..self.num_cells())
            .map(|i| kl_slice(self.beta(i), &ones))
            .sum()
    }

    /// Mean Dirichlet entropy over cells.
    pub fn mean_entropy(&self) -> f64 {
        let total: f64 = (0..self.num_cells())
            .map(|i| entropy_slice(self.beta(i)))
            .sum();
        total / self.num_cells() as f64
    }

    pub fn snapshot(&self) -> MapSnapshot {
        MapSnapshot {
            cell_size: self.cell_size,
            width_cells: self.cols,
            height_cells: self.rows,
            betas: (0..self.num_cells()).map(|i| self.beta(i).to_vec()).collect(),
        }
    }

    pub(crate) fn log_post(&self, index: usize) -> &[f64] {
        &self.log_post[index * self.channels..(index + 1) * self.channels]
    }
}
