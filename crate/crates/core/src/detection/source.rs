use std::sync::Arc;

use super::{Detection, DetectionStore, GroundTruth};
use crate::error::{Error, Result};
use crate::foveation::Image;
use crate::geometry::GazeState;

/// Everything a detector may look at for one fixation.
pub struct Frame<'a> {
    pub ground_truth: &'a GroundTruth,
    pub gaze: GazeState,
    /// Foveated frame; only present when the source asks for pixels.
    pub image: Option<&'a Image>,
}

pub trait DetectionSource {
    /// Whether [`Frame::image`] must be filled in.
    fn needs_image(&self) -> bool;

    fn detect(&mut self, frame: &Frame<'_>) -> Result<Vec<Detection>>;
}

/// Replays recorded detections, using the nearest recorded fixation of the
/// same image.
pub struct ReplaySource {
    store: Arc<DetectionStore>,
}

impl ReplaySource {
    pub fn new(store: Arc<DetectionStore>) -> Self {
        Self { store }
    }
}

impl DetectionSource for ReplaySource {
    fn needs_image(&self) -> bool {
        false
    }

    fn detect(&mut self, frame: &Frame<'_>) -> Result<Vec<Detection>> {
        let id = &frame.ground_truth.image_id;
        let f = frame.gaze.fixation;
        self.store
            .iter()
            .filter(|(k, _)| &k.image_id == id)
            .min_by(|(a, _), (b, _)| {
                let da = (a.fixation.x - f.x).hypot(a.fixation.y - f.y);
                let db = (b.fixation.x - f.x).hypot(b.fixation.y - f.y);
                da.total_cmp(&db)
            })
            .map(|(_, d)| d.clone())
            .ok_or_else(|| Error::Validation(format!("no recorded detections for image {id}")))
    }
}
