//! Synthetic scenes and a closed-form generator model for the simulated
//! detector.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{
    BoundingBox, DetectionSource, GroundTruth, GroundTruthObject, SimulatedDetector,
    SimulatedDetectorConfig,
};
use crate::explore::{ExplorationConfig, Scene};
use crate::error::{Error, Result};
use crate::foveation::Image;
use crate::geometry::{DistanceBinning, GazeState, Point};
use crate::numeric::DirichletParams;
use crate::observation::{train, ObservationModel, TrainingFrame, DEFAULT_IOU_THRESHOLD};

/// Shape of the generator's Dirichlet table.
///
/// Class `k` in bin `b` has concentration `base_b` on every channel plus
/// `peak_b` on channel `k`. Both are interpolated from the nearest to the
/// farthest bin (base linearly, peak geometrically), so scores get flatter
/// and noisier away from the fovea.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub base_near: f64,
    pub base_far: f64,
    pub peak_near: f64,
    pub peak_far: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            base_near: 1.0,
            base_far: 6.0,
            peak_near: 20.0,
            peak_far: 1.2,
        }
    }
}

pub fn generator_model(
    num_classes: usize,
    binning: DistanceBinning,
    spec: &GeneratorSpec,
) -> Result<ObservationModel> {
    let ok = spec.base_near > 0.0 && spec.base_far > 0.0 && spec.peak_near >= 0.0 && spec.peak_far >= 0.0;
    if !ok {
        return Err(Error::Validation(format!("invalid generator spec {spec:?}")));
    }
    let channels = num_classes + 1;
    let bins = binning.num_bins();
    let alphas = (0..channels)
        .map(|k| {
            (0..bins)
                .map(|b| {
                    let t = if bins > 1 { b as f64 / (bins - 1) as f64 } else { 0.0 };
                    let base = spec.base_near + t * (spec.base_far - spec.base_near);
                    let peak = if spec.peak_near > 0.0 && spec.peak_far > 0.0 {
                        spec.peak_near * (spec.peak_far / spec.peak_near).powf(t)
                    } else {
                        spec.peak_near + t * (spec.peak_far - spec.peak_near)
                    };
                    let mut a = vec![base; channels];
                    a[k] += peak;
                    DirichletParams::new(a)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    ObservationModel::from_parts(num_classes, binning, alphas, None, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub num_classes: usize,
    /// Inclusive range of object counts.
    pub objects: (usize, usize),
    /// Inclusive range of box side lengths in pixels.
    pub object_size: (f64, f64),
    /// Objects are placed inside a randomly positioned window covering this
    /// fraction of each image side (1 = anywhere).
    pub cluster_fraction: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            num_classes: 5,
            objects: (4, 8),
            object_size: (32.0, 72.0),
            cluster_fraction: 0.5,
        }
    }
}

/// Random non-overlapping labelled boxes.
pub fn generate_scene<R: Rng + ?Sized>(image_id: &str, spec: &SceneSpec, rng: &mut R) -> GroundTruth {
    let count = rng.gen_range(spec.objects.0..=spec.objects.1);
    let (lo, hi) = spec.object_size;
    let frac = spec.cluster_fraction.clamp(0.0, 1.0);
    let (ww, wh) = (
        (spec.width as f64 * frac).max(hi + 2.0).min(spec.width as f64),
        (spec.height as f64 * frac).max(hi + 2.0).min(spec.height as f64),
    );
    let wx = rng.gen_range(0.0..=spec.width as f64 - ww);
    let wy = rng.gen_range(0.0..=spec.height as f64 - wh);
    let mut objects: Vec<GroundTruthObject> = Vec::with_capacity(count);
    let mut attempts = 0;
    while objects.len() < count && attempts < 1000 {
        attempts += 1;
        let w = rng.gen_range(lo..=hi).min(ww - 2.0);
        let h = rng.gen_range(lo..=hi).min(wh - 2.0);
        let x0 = wx + rng.gen_range(1.0..(ww - w - 1.0).max(1.5));
        let y0 = wy + rng.gen_range(1.0..(wh - h - 1.0).max(1.5));
        let class_id = rng.gen_range(1..=spec.num_classes);
        let Ok(bbox) = BoundingBox::new(x0.round(), y0.round(), (x0 + w).round(), (y0 + h).round())
        else {
            continue;
        };
        // keep an 8 px gap so boxes never share map cells edge-to-edge
        let clear = objects.iter().all(|o| {
            bbox.x_min > o.bbox.x_max + 8.0
                || o.bbox.x_min > bbox.x_max + 8.0
                || bbox.y_min > o.bbox.y_max + 8.0
                || o.bbox.y_min > bbox.y_max + 8.0
        });
        if clear {
            objects.push(GroundTruthObject { bbox, class_id });
        }
    }
    GroundTruth {
        image_id: image_id.to_string(),
        width: spec.width,
        height: spec.height,
        objects,
    }
}

/// `count` scenes with ids `scene_000`, `scene_001`, ...
pub fn generate_scenes(spec: &SceneSpec, count: usize, seed: u64) -> Vec<GroundTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| generate_scene(&format!("scene_{i:03}"), spec, &mut rng))
        .collect()
}

/// Noisy background with class-coloured, striped rectangles.
pub fn render_scene<R: Rng + ?Sized>(gt: &GroundTruth, rng: &mut R) -> Image {
    let (w, h) = (gt.width, gt.height);
    let mut img = Image::filled(w, h, 3, 0).expect("non-zero extent");
    for y in 0..h {
        for x in 0..w {
            let base = 90 + ((x / 24 + y / 24) % 2) as i32 * 20;
            for c in 0..3 {
                let v = base + rng.gen_range(-12..=12);
                img.set(x, y, c, v.clamp(0, 255) as u8);
            }
        }
    }
    for obj in &gt.objects {
        let hue = obj.class_id as u32 * 67;
        let color = [
            (60 + hue % 190) as u8,
            (60 + (hue * 3) % 190) as u8,
            (60 + (hue * 7) % 190) as u8,
        ];
        let period = 2 + obj.class_id as u32;
        let b = obj.bbox;
        for y in b.y_min as u32..(b.y_max as u32).min(h) {
            for x in b.x_min as u32..(b.x_max as u32).min(w) {
                let stripe = (x + y) / period % 2 == 0;
                for (c, v) in color.iter().enumerate() {
                    let v = if stripe { *v } else { v / 2 };
                    img.set(x, y, c as u8, v);
                }
            }
        }
    }
    img
}

/// Detections of each scene at `fixations_per_scene` uniformly random
/// fixations, for training an observation model.
pub fn training_frames(
    scenes: &[GroundTruth],
    detector: &mut SimulatedDetector,
    fixations_per_scene: usize,
    seed: u64,
) -> Result<Vec<TrainingFrame>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(scenes.len() * fixations_per_scene);
    for gt in scenes {
        for _ in 0..fixations_per_scene {
            let fixation = Point::new(
                rng.gen_range(0.0..gt.width as f64 - 1.0),
                rng.gen_range(0.0..gt.height as f64 - 1.0),
            );
            let detections = detector.detect_at(gt, &GazeState::at(fixation))?;
            frames.push(TrainingFrame {
                ground_truth: gt.clone(),
                fixation,
                detections,
            });
        }
    }
    Ok(frames)
}

/// A closed-loop benchmark: a generator, a model trained from simulated
/// detections on separate training scenes, and held-out test scenes.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub scenes: Vec<GroundTruth>,
    pub generator: Arc<ObservationModel>,
    pub model: ObservationModel,
    pub detector: SimulatedDetectorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSpec {
    pub scene: SceneSpec,
    pub generator: GeneratorSpec,
    pub detector: SimulatedDetectorConfig,
    pub num_scenes: usize,
    pub training_scenes: usize,
    pub fixations_per_training_scene: usize,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            generator: GeneratorSpec::default(),
            detector: SimulatedDetectorConfig::default(),
            num_scenes: 20,
            training_scenes: 20,
            fixations_per_training_scene: 200,
            seed: 7,
        }
    }
}

impl Benchmark {
    pub fn build(spec: &BenchmarkSpec) -> Result<Self> {
        let s = &spec.scene;
        let binning = DistanceBinning::for_image(s.width, s.height);
        let generator = Arc::new(generator_model(s.num_classes, binning.clone(), &spec.generator)?);
        let training = generate_scenes(s, spec.training_scenes, spec.seed.wrapping_add(1));
        let mut detector = SimulatedDetector::new(spec.detector, generator.clone(), spec.seed.wrapping_add(2))?;
        let frames = training_frames(
            &training,
            &mut detector,
            spec.fixations_per_training_scene,
            spec.seed.wrapping_add(3),
        )?;
        let model = train(&frames, s.num_classes, binning, DEFAULT_IOU_THRESHOLD)?;
        Ok(Self {
            scenes: generate_scenes(s, spec.num_scenes, spec.seed),
            generator,
            model,
            detector: spec.detector,
        })
    }

    /// Test scenes without pixels (the simulated detector reads ground truth).
    pub fn pixel_free_scenes(&self) -> Vec<Scene> {
        self.scenes.iter().map(|g| Scene::new(g.clone(), None)).collect()
    }

    /// Detector factory for experiments: one seeded simulator per run.
    pub fn detector_factory(
        &self,
    ) -> impl Fn(&Scene, &ExplorationConfig, u64) -> Result<Box<dyn DetectionSource>> + Sync {
        let generator = self.generator.clone();
        let config = self.detector;
        move |_: &Scene, _: &ExplorationConfig, seed: u64| {
            Ok(Box::new(SimulatedDetector::new(config, generator.clone(), seed)?) as Box<dyn DetectionSource>)
        }
    }
}
