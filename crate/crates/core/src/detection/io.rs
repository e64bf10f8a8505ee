//! JSON-lines detection files and ground-truth files.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::numeric::SimplexVector;

/// Unit-sum tolerance below which score vectors are silently renormalized.
const RENORMALIZE_TOL: f64 = 1e-6;

/// Wire form of one line of a detections file (also the bridge response).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub fixation: [f64; 2],
    pub boxes: Vec<[f64; 4]>,
    pub scores: Vec<Vec<f64>>,
}

impl DetectionRecord {
    pub fn from_detections(image_id: &str, fixation: Point, detections: &[Detection]) -> Self {
        Self {
            image_id: image_id.to_string(),
            fixation: [fixation.x, fixation.y],
            boxes: detections.iter().map(|d| d.bbox.into()).collect(),
            scores: detections.iter().map(|d| d.scores.as_slice().to_vec()).collect(),
        }
    }

    /// Validates boxes and scores, renormalizing near-unit score vectors.
    pub fn into_detections(self) -> Result<(FrameKey, Vec<Detection>)> {
        if self.boxes.len() != self.scores.len() {
            return Err(Error::Validation(format!(
                "{} boxes but {} score vectors",
                self.boxes.len(),
                self.scores.len()
            )));
        }
        let mut out = Vec::with_capacity(self.boxes.len());
        for (i, (b, s)) in self.boxes.into_iter().zip(self.scores).enumerate() {
            let bbox = BoundingBox::try_from(b)
                .map_err(|e| Error::Validation(format!("detection {i}: {e}")))?;
            let scores = validate_scores(s).map_err(|e| {
                Error::Validation(format!("detection {i}: {e}"))
            })?;
            out.push(Detection { bbox, scores });
        }
        let key = FrameKey {
            image_id: self.image_id,
            fixation: Point::new(self.fixation[0], self.fixation[1]),
        };
        Ok((key, out))
    }
}

fn validate_scores(s: Vec<f64>) -> Result<SimplexVector> {
    if s.len() < 2 {
        return Err(Error::Validation("score vector needs at least 2 entries".into()));
    }
    if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation(format!("negative or non-finite score in {s:?}")));
    }
    let total: f64 = s.iter().sum();
    if (total - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::Validation(format!("scores sum to {total}, not 1")));
    }
    SimplexVector::normalize(s)
}

/// `(image, fixation)` key of a recorded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameKey {
    pub image_id: String,
    pub fixation: Point,
}

impl Eq for FrameKey {}

impl Ord for FrameKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.image_id
            .cmp(&other.image_id)
            .then(self.fixation.x.total_cmp(&other.fixation.x))
            .then(self.fixation.y.total_cmp(&other.fixation.y))
    }
}

impl PartialOrd for FrameKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub type DetectionStore = BTreeMap<FrameKey, Vec<Detection>>;

pub fn parse_record(line: &str) -> Result<(FrameKey, Vec<Detection>)> {
    let record: DetectionRecord =
        serde_json::from_str(line).map_err(|e| Error::Validation(e.to_string()))?;
    record.into_detections()
}

pub fn encode_record(image_id: &str, fixation: Point, detections: &[Detection]) -> String {
    serde_json::to_string(&DetectionRecord::from_detections(image_id, fixation, detections))
        .expect("detection records always serialize")
}

/// Reads a JSON-lines detections file. Repeated keys accumulate detections.
pub fn load_detections(path: impl AsRef<Path>) -> Result<DetectionStore> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut store = DetectionStore::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DetectionRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        let (key, dets) = record.into_detections().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!(
                "{}:{}: {m}",
                path.display(),
                idx + 1
            )),
            other => other,
        })?;
        store.entry(key).or_default().extend(dets);
    }
    Ok(store)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let gt: GroundTruth = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    gt.validate(None)?;
    Ok(gt)
}

pub fn write_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(gt).expect("ground truth serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
