//! A stochastic stand-in for an object detector looking at a foveated frame.
//!
//! Each ground-truth object is detected with a probability that decays
//! logistically with its distance to the fixation. Detected boxes get corner
//! noise proportional to that distance, and score vectors are drawn from the
//! Dirichlet that a generator observation model assigns to the object's class
//! and distance bin. Spurious detections carry background-class scores.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{BoundingBox, Detection, DetectionSource, Frame, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::{fovea_distance, GazeState};
use crate::numeric::dirichlet_sample;
use crate::observation::ObservationModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatedDetectorConfig {
    /// Distance (pixels) at which detection probability is one half.
    /// `None` means 0.6 × the generator model's largest bin edge.
    pub miss_midpoint: Option<f64>,
    /// Logistic slope per pixel.
    pub miss_slope: f64,
    /// Box-corner noise std as a fraction of fovea distance.
    pub jitter_scale: f64,
    /// Expected spurious detections per fixation.
    pub false_positive_rate: f64,
    /// Side-length range of spurious boxes in pixels.
    pub false_positive_size: (f64, f64),
}

impl Default for SimulatedDetectorConfig {
    fn default() -> Self {
        Self {
            miss_midpoint: None,
            miss_slope: 0.02,
            jitter_scale: 0.02,
            false_positive_rate: 0.5,
            false_positive_size: (16.0, 96.0),
        }
    }
}

impl SimulatedDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.miss_slope >= 0.0
            && self.jitter_scale >= 0.0
            && self.false_positive_rate >= 0.0
            && self.false_positive_size.0 > 0.0
            && self.false_positive_size.0 <= self.false_positive_size.1
            && self.miss_midpoint.map_or(true, |m| m.is_finite());
        if !ok {
            return Err(Error::Validation(format!(
                "invalid simulated detector config {self:?}"
            )));
        }
        Ok(())
    }

    /// Probability of detecting an object at fovea distance `d`.
    pub fn detect_probability(&self, d: f64, max_radius: f64) -> f64 {
        let midpoint = self.miss_midpoint.unwrap_or(0.6 * max_radius);
        1.0 / (1.0 + (self.miss_slope * (d - midpoint)).exp())
    }

    /// Same config with every noise source switched off: objects are always
    /// detected, boxes are exact and nothing spurious appears.
    pub fn noise_free() -> Self {
        Self {
            // far enough that the logistic saturates at 1 for any distance
            miss_midpoint: Some(f64::MAX),
            jitter_scale: 0.0,
            false_positive_rate: 0.0,
            ..Self::default()
        }
    }
}

/// Simulated detector with its own random stream.
pub struct SimulatedDetector {
    config: SimulatedDetectorConfig,
    generator: Arc<ObservationModel>,
    rng: ChaCha8Rng,
}

impl SimulatedDetector {
    pub fn new(
        config: SimulatedDetectorConfig,
        generator: Arc<ObservationModel>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            generator,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &SimulatedDetectorConfig {
        &self.config
    }

    pub fn generator(&self) -> &ObservationModel {
        &self.generator
    }

    pub fn detect_at(&mut self, gt: &GroundTruth, gaze: &GazeState) -> Result<Vec<Detection>> {
        let model = &*self.generator;
        let k = model.num_classes();
        if let Some(obj) = gt.objects.iter().find(|o| o.class_id == 0 || o.class_id > k) {
            return Err(Error::Contract(format!(
                "ground-truth class {} not covered by generator model with K = {k}",
                obj.class_id
            )));
        }
        let max_radius = model.binning().max_radius();
        let mut out = Vec::new();

        for obj in &gt.objects {
            let d = fovea_distance(obj.bbox.center(), gaze);
            let p = self.config.detect_probability(d, max_radius);
            if self.rng.gen::<f64>() >= p {
                continue;
            }
            let std = self.config.jitter_scale * d;
            let mut corners: [f64; 4] = obj.bbox.into();
            if std > 0.0 {
                let noise = Normal::new(0.0, std).expect("finite std");
                for c in &mut corners {
                    *c += noise.sample(&mut self.rng);
                }
            }
            let alpha = model.alpha(obj.class_id, model.binning().bin_of(d));
            let scores = dirichlet_sample(alpha, &mut self.rng);
            if let Some(bbox) = ordered_box(corners, gt.width, gt.height) {
                out.push(Detection { bbox, scores });
            }
        }

        if self.config.false_positive_rate > 0.0 {
            let poisson = Poisson::new(self.config.false_positive_rate).expect("positive rate");
            let count = poisson.sample(&mut self.rng) as usize;
            let (lo, hi) = self.config.false_positive_size;
            for _ in 0..count {
                let w = self.rng.gen_range(lo..=hi);
                let h = self.rng.gen_range(lo..=hi);
                let cx = self.rng.gen_range(0.0..gt.width as f64);
                let cy = self.rng.gen_range(0.0..gt.height as f64);
                let corners = [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0];
                let Some(bbox) = ordered_box(corners, gt.width, gt.height) else {
                    continue;
                };
                let d = fovea_distance(bbox.center(), gaze);
                let alpha = model.alpha(0, model.binning().bin_of(d));
                let scores = dirichlet_sample(alpha, &mut self.rng);
                out.push(Detection { bbox, scores });
            }
        }
        Ok(out)
    }
}

/// Sorts jittered corners and clips them to the image, keeping at least one
/// pixel of extent.
fn ordered_box(c: [f64; 4], width: u32, height: u32) -> Option<BoundingBox> {
    let (x0, x1) = (c[0].min(c[2]), c[0].max(c[2]));
    let (y0, y1) = (c[1].min(c[3]), c[1].max(c[3]));
    let x1 = x1.max(x0 + 1.0);
    let y1 = y1.max(y0 + 1.0);
    BoundingBox::new(x0, y0, x1, y1).ok()?.clipped(width, height)
}

impl DetectionSource for SimulatedDetector {
    fn needs_image(&self) -> bool {
        false
    }

    fn detect(&mut self, frame: &Frame<'_>) -> Result<Vec<Detection>> {
        self.detect_at(frame.ground_truth, &frame.gaze)
    }
}
