//! Loading datasets and building detectors from a manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use foveal_core::detection::{
    load_detections, load_ground_truth, BridgeClient, DetectionSource, GroundTruth, ReplaySource, SimulatedDetector,
};
use foveal_core::explore::{ExplorationConfig, Scene, SourceFactory};
use foveal_core::foveation::Image;
use foveal_core::geometry::{half_diagonal, DistanceBinning, DEFAULT_NUM_BINS};
use foveal_core::observation::ObservationModel;
use foveal_core::synthetic::generator_model;

use crate::manifest::{existing, DetectorKind, RunManifest};
use crate::Invalid;

/// Ground truth from one JSON file or every `*.json` in a directory, sorted
/// by file name.
pub fn load_ground_truths(path: &Path) -> Result<Vec<GroundTruth>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Invalid(format!("no ground-truth files in {}", path.display())).into());
    }
    let gts = files
        .iter()
        .map(|f| load_ground_truth(f).with_context(|| format!("loading {}", f.display())))
        .collect::<Result<Vec<_>>>()?;
    let mut ids: Vec<&str> = gts.iter().map(|g| g.image_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Invalid(format!("image id {} appears twice", w[0])).into());
    }
    Ok(gts)
}

/// Scenes for the manifest's dataset, with pixels when an image directory
/// is set or `need_pixels` demands one.
pub fn load_scenes(m: &RunManifest, need_pixels: bool) -> Result<Vec<Scene>> {
    let gts = load_ground_truths(existing("ground-truth", m.paths.ground_truth.as_deref())?)?;
    let images = if need_pixels {
        Some(existing("image directory", m.paths.images.as_deref())?)
    } else {
        m.paths.images.as_deref().filter(|p| p.exists())
    };
    gts.into_iter()
        .map(|gt| {
            let image = match images {
                Some(dir) => {
                    let p = dir.join(format!("{}.png", gt.image_id));
                    if !p.exists() {
                        return Err(Invalid(format!("image {} does not exist", p.display())).into());
                    }
                    Some(Image::read_png(&p).with_context(|| format!("reading {}", p.display()))?)
                }
                None => None,
            };
            Ok(Scene::new(gt, image))
        })
        .collect()
}

/// The manifest's binning, or default bins for the first image's size.
pub fn binning(m: &RunManifest, first: &GroundTruth) -> Result<DistanceBinning> {
    if let Some(edges) = &m.binning.edges {
        return Ok(DistanceBinning::new(edges.clone())?);
    }
    let n = m.binning.num_bins.unwrap_or(DEFAULT_NUM_BINS);
    if n == 0 {
        return Err(Invalid("binning.num_bins must be positive".into()).into());
    }
    Ok(DistanceBinning::uniform(n, half_diagonal(first.width, first.height)))
}

pub fn bridge_client(m: &RunManifest, num_classes: usize) -> Result<BridgeClient> {
    let endpoint = m
        .detector
        .endpoint
        .clone()
        .ok_or_else(|| Invalid("the bridge detector needs detector.endpoint or --endpoint".into()))?;
    if !(m.detector.timeout_secs > 0.0) {
        return Err(Invalid("detector.timeout_secs must be positive".into()).into());
    }
    Ok(BridgeClient::new(endpoint, num_classes)
        .with_timeout(Duration::from_secs_f64(m.detector.timeout_secs))
        .with_server_foveation(m.detector.server_foveation))
}

/// Builds one fresh detector per run.
pub fn source_factory(m: &RunManifest, model: &ObservationModel, scenes: &[Scene]) -> Result<Box<dyn SourceFactory>> {
    let k = model.num_classes();
    Ok(match m.detector.kind {
        DetectorKind::Simulated => {
            let generator = Arc::new(generator_model(k, binning(m, &scenes[0].ground_truth)?, &m.detector.generator)?);
            let config = m.detector.simulated;
            config.validate()?;
            Box::new(move |_: &Scene, _: &ExplorationConfig, seed: u64| -> foveal_core::Result<Box<dyn DetectionSource>> {
                Ok(Box::new(SimulatedDetector::new(config, generator.clone(), seed)?))
            })
        }
        DetectorKind::Replay => {
            let path = existing("detections", m.paths.detections.as_deref())?;
            let store = Arc::new(load_detections(path)?);
            Box::new(move |_: &Scene, _: &ExplorationConfig, _: u64| -> foveal_core::Result<Box<dyn DetectionSource>> {
                Ok(Box::new(ReplaySource::new(store.clone())))
            })
        }
        DetectorKind::Bridge => {
            let client = bridge_client(m, k)?;
            Box::new(move |_: &Scene, _: &ExplorationConfig, _: u64| -> foveal_core::Result<Box<dyn DetectionSource>> {
                Ok(Box::new(client.clone()))
            })
        }
    })
}

pub fn load_model(m: &RunManifest) -> Result<ObservationModel> {
    let path = m.model_path()?;
    let path = existing("model", Some(&path))?;
    Ok(ObservationModel::load(path)?)
}
