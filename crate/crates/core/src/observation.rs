//! The foveal observation model: one Dirichlet over detector score vectors
//! per (true class, distance bin), and score calibration against it.

use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{iou, Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::{fovea_distance, DistanceBinning, GazeState, Point};
use crate::numeric::{
    clamp_scores, fit_dirichlet_mle, log_pdf_slice, DirichletParams, SimplexVector,
};

pub const MODEL_FILE_VERSION: u64 = 1;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

/// Learned `p(S | C = k, d)` table, classes `0..=K` by distance bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    num_classes: usize,
    binning: DistanceBinning,
    alphas: Vec<Vec<DirichletParams>>,
    counts: Vec<Vec<usize>>,
    converged: Vec<Vec<bool>>,
    /// Dirichlet means, cached for score prediction.
    means: Vec<Vec<Vec<f64>>>,
}

impl ObservationModel {
    /// Assembles a model from a `[class][bin]` table. Missing counts default
    /// to zero and missing convergence flags to `true`.
    pub fn from_parts(
        num_classes: usize,
        binning: DistanceBinning,
        alphas: Vec<Vec<DirichletParams>>,
        counts: Option<Vec<Vec<usize>>>,
        converged: Option<Vec<Vec<bool>>>,
    ) -> Result<Self> {
        let channels = num_classes + 1;
        let bins = binning.num_bins();
        if num_classes == 0 {
            return Err(Error::Validation("model needs at least one object class".into()));
        }
        if alphas.len() != channels || alphas.iter().any(|row| row.len() != bins) {
            return Err(Error::Validation(format!(
                "alpha table must be {channels} classes x {bins} bins"
            )));
        }
        if let Some(bad) = alphas.iter().flatten().find(|a| a.dim() != channels) {
            return Err(Error::Validation(format!(
                "alpha entry of dimension {} (expected {channels})",
                bad.dim()
            )));
        }
        let counts = counts.unwrap_or_else(|| vec![vec![0; bins]; channels]);
        let converged = converged.unwrap_or_else(|| vec![vec![true; bins]; channels]);
        if counts.len() != channels
            || counts.iter().any(|r| r.len() != bins)
            || converged.len() != channels
            || converged.iter().any(|r| r.len() != bins)
        {
            return Err(Error::Validation(
                "counts/converged tables do not match the alpha table".into(),
            ));
        }
        let means = alphas
            .iter()
            .map(|row| row.iter().map(|a| a.mean().into_vec()).collect())
            .collect();
        Ok(Self {
            num_classes,
            binning,
            alphas,
            counts,
            converged,
            means,
        })
    }

    /// Every entry the flat all-ones Dirichlet.
    pub fn uniform(num_classes: usize, binning: DistanceBinning) -> Self {
        let bins = binning.num_bins();
        let alphas = vec![vec![DirichletParams::uniform(num_classes + 1); bins]; num_classes + 1];
        Self::from_parts(num_classes, binning, alphas, None, None).expect("consistent shape")
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Score-vector length, `K + 1`.
    pub fn num_channels(&self) -> usize {
        self.num_classes + 1
    }

    pub fn binning(&self) -> &DistanceBinning {
        &self.binning
    }

    pub fn alpha(&self, class: usize, bin: usize) -> &DirichletParams {
        &self.alphas[class][bin]
    }

    pub(crate) fn mean_slice(&self, class: usize, bin: usize) -> &[f64] {
        &self.means[class][bin]
    }

    pub fn count(&self, class: usize, bin: usize) -> usize {
        self.counts[class][bin]
    }

    pub fn converged(&self, class: usize, bin: usize) -> bool {
        self.converged[class][bin]
    }

    /// Cells trained on fewer than two samples, which hold the flat prior.
    pub fn fallback_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, row) in self.counts.iter().enumerate() {
            for (b, c) in row.iter().enumerate() {
                if *c < 2 {
                    out.push((k, b));
                }
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            version: serde_json::Value::from(MODEL_FILE_VERSION),
            num_classes: self.num_classes,
            bin_edges: self.binning.edges().to_vec(),
            alphas: self
                .alphas
                .iter()
                .map(|row| row.iter().map(|a| a.as_slice().to_vec()).collect())
                .collect(),
            counts: self.counts.clone(),
            converged: self.converged.clone(),
        };
        let text = serde_json::to_string_pretty(&file).expect("model serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |message: String| Error::Corrupt {
            path: path.to_path_buf(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        let version = match value.get("version") {
            Some(serde_json::Value::Number(n)) => n.as_u64(),
            Some(serde_json::Value::String(s)) => s.trim().parse().ok(),
            _ => None,
        }
        .ok_or_else(|| corrupt("missing or malformed version field".into()))?;
        if version != MODEL_FILE_VERSION {
            return Err(Error::Version {
                found: version,
                supported: MODEL_FILE_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        let binning = DistanceBinning::new(file.bin_edges).map_err(|e| corrupt(e.to_string()))?;
        let alphas = file
            .alphas
            .into_iter()
            .map(|row| row.into_iter().map(DirichletParams::new).collect())
            .collect::<Result<Vec<Vec<_>>>>()
            .map_err(|e| corrupt(e.to_string()))?;
        Self::from_parts(
            file.num_classes,
            binning,
            alphas,
            Some(file.counts),
            Some(file.converged),
        )
        .map_err(|e| corrupt(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: serde_json::Value,
    num_classes: usize,
    bin_edges: Vec<f64>,
    alphas: Vec<Vec<Vec<f64>>>,
    counts: Vec<Vec<usize>>,
    converged: Vec<Vec<bool>>,
}

/// Detections collected at one fixation of one labelled image.
#[derive(Debug, Clone)]
pub struct TrainingFrame {
    pub ground_truth: GroundTruth,
    pub fixation: Point,
    pub detections: Vec<Detection>,
}

/// Greedy one-to-one matching by descending IoU, keeping pairs above
/// `threshold`. Ties go to the lower detection index, then the lower
/// ground-truth index. Returns the matched ground-truth index per detection.
pub fn match_detections(
    detections: &[Detection],
    ground_truth: &GroundTruth,
    threshold: f64,
) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (i, det) in detections.iter().enumerate() {
        for (j, obj) in ground_truth.objects.iter().enumerate() {
            let v = iou(&det.bbox, &obj.bbox);
            if v > threshold {
                pairs.push((v, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_match = vec![None; detections.len()];
    let mut gt_taken = vec![false; ground_truth.objects.len()];
    for (_, i, j) in pairs {
        if det_match[i].is_none() && !gt_taken[j] {
            det_match[i] = Some(j);
            gt_taken[j] = true;
        }
    }
    det_match
}

/// Groups detections by (true class, distance bin); unmatched detections are
/// background. Returns `samples[class][bin]`.
pub fn group_training_samples(
    dataset: &[TrainingFrame],
    num_classes: usize,
    binning: &DistanceBinning,
    iou_threshold: f64,
) -> Result<Vec<Vec<Vec<SimplexVector>>>> {
    let channels = num_classes + 1;
    let mut samples = vec![vec![Vec::new(); binning.num_bins()]; channels];
    for frame in dataset {
        frame.ground_truth.validate(Some(num_classes))?;
        let gaze = GazeState::at(frame.fixation);
        let matches = match_detections(&frame.detections, &frame.ground_truth, iou_threshold);
        for (det, m) in frame.detections.iter().zip(matches) {
            if det.num_channels() != channels {
                return Err(Error::Contract(format!(
                    "detection has {} scores, model expects {channels}",
                    det.num_channels()
                )));
            }
            let class = m.map_or(0, |j| frame.ground_truth.objects[j].class_id);
            let bin = binning.bin_of(fovea_distance(det.bbox.center(), &gaze));
            samples[class][bin].push(det.scores.clone());
        }
    }
    Ok(samples)
}

/// Fits one Dirichlet per (class, bin) cell from detections at random
/// fixations. Cells with fewer than two samples fall back to the flat prior.
pub fn train(
    dataset: &[TrainingFrame],
    num_classes: usize,
    binning: DistanceBinning,
    iou_threshold: f64,
) -> Result<ObservationModel> {
    if dataset.is_empty() {
        return Err(Error::Contract("training dataset is empty".into()));
    }
    let channels = num_classes + 1;
    let bins = binning.num_bins();
    let samples = group_training_samples(dataset, num_classes, &binning, iou_threshold)?;

    let cells: Vec<(usize, usize)> = (0..channels)
        .flat_map(|k| (0..bins).map(move |b| (k, b)))
        .collect();
    let fits: Vec<(DirichletParams, usize, bool)> = cells
        .par_iter()
        .map(|&(k, b)| {
            let group = &samples[k][b];
            if group.len() < 2 {
                warn!(
                    "class {k} bin {b}: {} sample(s), using flat prior",
                    group.len()
                );
                return Ok((DirichletParams::uniform(channels), group.len(), true));
            }
            let fit = fit_dirichlet_mle(group)?;
            if !fit.converged {
                warn!("class {k} bin {b}: Dirichlet fit did not converge");
            }
            Ok((fit.params, group.len(), fit.converged))
        })
        .collect::<Result<_>>()?;

    let mut alphas = vec![Vec::with_capacity(bins); channels];
    let mut counts = vec![Vec::with_capacity(bins); channels];
    let mut converged = vec![Vec::with_capacity(bins); channels];
    for ((k, _), (a, n, ok)) in cells.into_iter().zip(fits) {
        alphas[k].push(a);
        counts[k].push(n);
        converged[k].push(ok);
    }
    ObservationModel::from_parts(num_classes, binning, alphas, Some(counts), Some(converged))
}

/// Per-class log-likelihoods `log p(S | C = k, bin(distance))`.
pub(crate) fn class_log_likelihoods(
    raw_scores: &[f64],
    distance: f64,
    model: &ObservationModel,
) -> Vec<f64> {
    bin_log_likelihoods(raw_scores, model.binning.bin_of(distance), model)
}

pub(crate) fn bin_log_likelihoods(raw_scores: &[f64], bin: usize, model: &ObservationModel) -> Vec<f64> {
    let clamped = clamp_scores(raw_scores);
    (0..model.num_channels())
        .map(|k| log_pdf_slice(model.alphas[k][bin].as_slice(), &clamped))
        .collect()
}

/// Calibrated scores: class likelihoods of the raw score vector under the
/// model, normalized to unit sum.
pub fn calibrate(
    raw_scores: &SimplexVector,
    distance: f64,
    model: &ObservationModel,
) -> Result<SimplexVector> {
    if raw_scores.len() != model.num_channels() {
        return Err(Error::Contract(format!(
            "score vector has {} entries, model expects {}",
            raw_scores.len(),
            model.num_channels()
        )));
    }
    let logs = class_log_likelihoods(raw_scores.as_slice(), distance, model);
    Ok(SimplexVector::from_log_weights(&logs))
}
