//! Detections, ground truth, and the sources that produce detections.

mod bridge;
mod io;
mod simulated;
mod source;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::numeric::SimplexVector;

pub use bridge::{BridgeClient, DEFAULT_BRIDGE_TIMEOUT};
pub use io::{
    encode_record, load_detections, load_ground_truth, parse_record, write_ground_truth,
    DetectionRecord, DetectionStore, FrameKey,
};
pub use simulated::{SimulatedDetector, SimulatedDetectorConfig};
pub use source::{DetectionSource, Frame, ReplaySource};

/// Axis-aligned box in world pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::Validation(format!(
                "invalid box [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Clips to `[0, width] × [0, height]`; `None` if nothing is left.
    pub fn clipped(&self, width: u32, height: u32) -> Option<Self> {
        let (w, h) = (width as f64, height as f64);
        Self::new(
            self.x_min.clamp(0.0, w),
            self.y_min.clamp(0.0, h),
            self.x_max.clamp(0.0, w),
            self.y_max.clamp(0.0, h),
        )
        .ok()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// One detector output: a box and a score vector over K+1 classes
/// (index 0 is background).
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub scores: SimplexVector,
}

impl Detection {
    pub fn num_channels(&self) -> usize {
        self.scores.len()
    }
}

/// Labelled object; `class_id` is in 1..=K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthObject {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub class_id: usize,
}

/// Ground truth for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<GroundTruthObject>,
}

impl GroundTruth {
    pub fn validate(&self, num_classes: Option<usize>) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation(format!(
                "{}: image extent must be non-zero",
                self.image_id
            )));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.class_id == 0 {
                return Err(Error::Validation(format!(
                    "{}: object {i} has background class id 0",
                    self.image_id
                )));
            }
            if let Some(k) = num_classes {
                if obj.class_id > k {
                    return Err(Error::Validation(format!(
                        "{}: object {i} class {} exceeds K = {k}",
                        self.image_id, obj.class_id
                    )));
                }
            }
        }
        Ok(())
    }
}
