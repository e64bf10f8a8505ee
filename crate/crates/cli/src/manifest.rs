//! TOML run manifests. Every key is optional; command-line flags override
//! whatever the manifest sets.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use foveal_core::detection::SimulatedDetectorConfig;
use foveal_core::foveation::FoveationConfig;
use foveal_core::map::{FusionRule, DEFAULT_CELL_SIZE};
use foveal_core::planner::{AcquisitionFunction, DEFAULT_STRIDE_CELLS};
use foveal_core::synthetic::{GeneratorSpec, SceneSpec};
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunManifest {
    pub seed: u64,
    /// Object classes K (background excluded). Defaults to the largest
    /// class id in the ground truth.
    pub num_classes: Option<usize>,
    /// Worker threads for experiments; 0 means one.
    pub jobs: usize,
    pub paths: Paths,
    pub detector: DetectorSection,
    pub binning: BinningSection,
    pub exploration: ExplorationSection,
    pub training: TrainingSection,
    pub compare: CompareSection,
    pub dataset: DatasetSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// A ground-truth JSON file or a directory of them.
    pub ground_truth: Option<PathBuf>,
    /// Directory holding `<image_id>.png`.
    pub images: Option<PathBuf>,
    /// Recorded detections (JSON lines) for the replay detector.
    pub detections: Option<PathBuf>,
    /// Observation-model file, written by training and read by the rest.
    pub model: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    #[default]
    Simulated,
    Replay,
    Bridge,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::Simulated => "simulated",
            DetectorKind::Replay => "replay",
            DetectorKind::Bridge => "bridge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub kind: DetectorKind,
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    /// Let the bridge foveate instead of sending pre-foveated frames.
    pub server_foveation: bool,
    pub simulated: SimulatedDetectorConfig,
    pub generator: GeneratorSpec,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Simulated,
            endpoint: None,
            timeout_secs: 30.0,
            server_foveation: false,
            simulated: SimulatedDetectorConfig::default(),
            generator: GeneratorSpec::default(),
        }
    }
}

/// Distance bins. Explicit `edges` win; otherwise `num_bins` uniform bins up
/// to half the diagonal of the first image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinningSection {
    pub edges: Option<Vec<f64>>,
    pub num_bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationSection {
    pub iterations: usize,
    pub rule: FusionRule,
    pub acquisition: AcquisitionFunction,
    pub cell_size: u32,
    pub stride_cells: usize,
    pub foveation: FoveationConfig,
}

impl Default for ExplorationSection {
    fn default() -> Self {
        Self {
            iterations: foveal_core::explore::DEFAULT_ITERATIONS,
            rule: FusionRule::KaplanModified,
            acquisition: AcquisitionFunction::KlGain,
            cell_size: DEFAULT_CELL_SIZE,
            stride_cells: DEFAULT_STRIDE_CELLS,
            foveation: FoveationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// Random fixations per image for the simulated and bridge detectors.
    pub fixations_per_image: usize,
    pub iou_threshold: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            fixations_per_image: 200,
            iou_threshold: foveal_core::observation::DEFAULT_IOU_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    #[serde(default)]
    pub name: Option<String>,
    pub rule: FusionRule,
    pub acquisition: AcquisitionFunction,
}

impl Policy {
    pub fn name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}+{}", self.acquisition, self.rule))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            policies: vec![
                Policy {
                    name: None,
                    rule: FusionRule::KaplanModified,
                    acquisition: AcquisitionFunction::Random,
                },
                Policy {
                    name: None,
                    rule: FusionRule::KaplanModified,
                    acquisition: AcquisitionFunction::KlGain,
                },
            ],
            seeds: (0..5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub scene: SceneSpec,
    pub count: usize,
    pub render_images: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            count: 20,
            render_images: true,
        }
    }
}

impl RunManifest {
    /// Parses `path`, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Invalid(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut m: RunManifest =
            toml::from_str(&text).map_err(|e| Invalid(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut m.paths.ground_truth,
            &mut m.paths.images,
            &mut m.paths.detections,
            &mut m.paths.model,
            &mut m.paths.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.paths
            .output_dir
            .as_deref()
            .ok_or_else(|| Invalid("no output directory (set paths.output_dir or --output-dir)".into()).into())
    }

    pub fn model_path(&self) -> Result<PathBuf> {
        match &self.paths.model {
            Some(p) => Ok(p.clone()),
            None => Ok(self.output_dir()?.join("model.json")),
        }
    }
}

/// Returns `path` if it exists, a validation error naming it otherwise.
pub fn existing<'a>(what: &str, path: Option<&'a Path>) -> Result<&'a Path> {
    let p = path.ok_or_else(|| Invalid(format!("no {what} path given")))?;
    if !p.exists() {
        return Err(Invalid(format!("{what} path {} does not exist", p.display())).into());
    }
    Ok(p)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunManifest>("sede = 3").is_err());
        assert!(toml::from_str::<RunManifest>("[exploration]\nfoo = 1").is_err());
        assert!(toml::from_str::<RunManifest>("[detector.simulated]\nmiss_slop = 1").is_err());
    }

    #[test]
    fn sections_parse_with_defaults() {
        let m: RunManifest = toml::from_str(
            r#"
            seed = 4
            [exploration]
            iterations = 3
            acquisition = "two_peaks"
            [detector]
            kind = "bridge"
            endpoint = "http://localhost:8000"
            [[compare.policies]]
            rule = "sum"
            acquisition = "random"
            "#,
        )
        .unwrap();
        assert_eq!(m.seed, 4);
        assert_eq!(m.exploration.iterations, 3);
        assert_eq!(m.exploration.acquisition, AcquisitionFunction::TwoPeaks);
        assert_eq!(m.exploration.rule, FusionRule::KaplanModified);
        assert_eq!(m.detector.kind, DetectorKind::Bridge);
        assert_eq!(m.compare.policies.len(), 1);
        assert_eq!(m.compare.policies[0].name(), "random+sum");
        assert_eq!(m.compare.seeds, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn relative_paths_follow_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[paths]\nmodel = \"m.json\"\noutput_dir = \"/abs\"\n").unwrap();
        let m = RunManifest::load(&path).unwrap();
        assert_eq!(m.paths.model.unwrap(), dir.path().join("m.json"));
        assert_eq!(m.paths.output_dir.unwrap(), PathBuf::from("/abs"));
    }
}
