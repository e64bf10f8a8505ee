//! The closed exploration loop and its evaluation metrics.
//!
//! foveate → detect → calibrate/fuse → record → select next fixation.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{DetectionSource, Frame, GroundTruth};
use crate::error::{Error, Result};
use crate::foveation::{foveate, FoveationConfig, Image};
use crate::geometry::{GazeState, Point};
use crate::map::{FusionRule, SemanticMap, DEFAULT_CELL_SIZE};
use crate::observation::ObservationModel;
use crate::planner::{select_gaze, AcquisitionFunction, CandidateGrid, DEFAULT_STRIDE_CELLS};

pub const DEFAULT_ITERATIONS: usize = 10;

pub const TRACE_CSV_HEADER: [&str; 13] = [
    "config",
    "image_id",
    "seed",
    "iteration",
    "fixation_x",
    "fixation_y",
    "num_detections",
    "precision",
    "recall",
    "f1",
    "accuracy",
    "map_kl_from_prior",
    "map_mean_entropy",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplorationConfig {
    pub name: String,
    pub num_iterations: usize,
    pub rule: FusionRule,
    pub acquisition: AcquisitionFunction,
    pub seed: u64,
    pub cell_size: u32,
    pub stride_cells: usize,
    pub foveation: FoveationConfig,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            name: "kl_gain".into(),
            num_iterations: DEFAULT_ITERATIONS,
            rule: FusionRule::KaplanModified,
            acquisition: AcquisitionFunction::KlGain,
            seed: 0,
            cell_size: DEFAULT_CELL_SIZE,
            stride_cells: DEFAULT_STRIDE_CELLS,
            foveation: FoveationConfig::default(),
        }
    }
}

impl ExplorationConfig {
    pub fn new(rule: FusionRule, acquisition: AcquisitionFunction) -> Self {
        Self {
            name: format!("{acquisition}+{rule}"),
            rule,
            acquisition,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_iterations == 0 {
            return Err(Error::Validation("num_iterations must be at least 1".into()));
        }
        if self.cell_size == 0 || self.stride_cells == 0 {
            return Err(Error::Validation("cell_size and stride_cells must be positive".into()));
        }
        self.foveation.validate()
    }
}

/// A scene to explore: ground truth plus (optionally) its pixels.
#[derive(Debug, Clone)]
pub struct Scene {
    pub ground_truth: GroundTruth,
    pub image: Option<Image>,
}

impl Scene {
    pub fn new(ground_truth: GroundTruth, image: Option<Image>) -> Self {
        Self { ground_truth, image }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub fixation: Point,
    pub num_detections: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub map_kl_from_prior: f64,
    pub map_mean_entropy: f64,
}

#[derive(Debug, Clone)]
pub struct ExplorationTrace {
    pub config: String,
    pub image_id: String,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    /// Set when the detector failed; `records` holds the iterations before it.
    pub error: Option<String>,
    /// Per cell: whether its argmax matched the ground-truth label after
    /// each successive classification.
    pub cell_history: Vec<Vec<bool>>,
    pub final_map: SemanticMap,
}

impl ExplorationTrace {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn final_f1(&self) -> Option<f64> {
        self.records.last().map(|r| r.f1)
    }

    pub fn outcome(&self) -> RunOutcome {
        RunOutcome {
            config: self.config.clone(),
            image_id: self.image_id.clone(),
            seed: self.seed,
            records: self.records.clone(),
            failed: self.failed(),
        }
    }
}

/// What summaries need from a run, without its map. Lets a resumed
/// experiment fold in runs recorded by an earlier process.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub config: String,
    pub image_id: String,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub failed: bool,
}

/// Class of the first object whose box contains each cell centre, else 0.
pub fn cell_labels(map: &SemanticMap, gt: &GroundTruth) -> Vec<usize> {
    (0..map.num_cells())
        .map(|i| {
            let c = map.cell_center(i);
            gt.objects
                .iter()
                .find(|o| o.bbox.contains(c))
                .map_or(0, |o| o.class_id)
        })
        .collect()
}

/// Object-level scores from the map: each object is assigned the argmax of
/// the mean posterior over cells whose centres lie in its box (the cell
/// under the box centre when no centre does). Ties resolve to background.
pub fn evaluate_f1(map: &SemanticMap, gt: &GroundTruth) -> F1Score {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut mean = vec![0.0; map.channels()];
    for obj in &gt.objects {
        mean.iter_mut().for_each(|m| *m = 0.0);
        let mut n = 0usize;
        for i in 0..map.num_cells() {
            if obj.bbox.contains(map.cell_center(i)) {
                accumulate(&mut mean, map, i);
                n += 1;
            }
        }
        if n == 0 {
            let c = obj.bbox.center();
            let col = ((c.x / map.cell_size() as f64) as usize).min(map.cols() - 1);
            let row = ((c.y / map.cell_size() as f64) as usize).min(map.rows() - 1);
            accumulate(&mut mean, map, map.cell_index(col, row));
        }
        let predicted = crate::numeric::argmax(&mean);
        if predicted == obj.class_id {
            tp += 1;
        } else if predicted == 0 {
            fn_ += 1;
        } else {
            fp += 1;
        }
    }
    f1_from_counts(tp, fp, fn_)
}

fn accumulate(mean: &mut [f64], map: &SemanticMap, cell: usize) {
    for (m, p) in mean.iter_mut().zip(map.posterior_at(cell).as_slice()) {
        *m += p;
    }
}

pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> F1Score {
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    F1Score {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    }
}

/// `(n, accuracy)` for n = 1..: per image, the fraction of cells with at
/// least n classifications whose argmax after the n-th matched ground
/// truth; then averaged over the images that have such cells.
pub fn evaluate_accuracy_vs_count(traces: &[ExplorationTrace]) -> Vec<(usize, f64)> {
    let max = traces
        .iter()
        .flat_map(|t| t.cell_history.iter().map(Vec::len))
        .max()
        .unwrap_or(0);
    (1..=max)
        .filter_map(|n| {
            let per_image: Vec<f64> = traces
                .iter()
                .filter_map(|t| {
                    let hits: Vec<bool> = t
                        .cell_history
                        .iter()
                        .filter(|h| h.len() >= n)
                        .map(|h| h[n - 1])
                        .collect();
                    (!hits.is_empty())
                        .then(|| hits.iter().filter(|&&b| b).count() as f64 / hits.len() as f64)
                })
                .collect();
            (!per_image.is_empty())
                .then(|| (n, per_image.iter().sum::<f64>() / per_image.len() as f64))
        })
        .collect()
}

/// Seeded uniform draw from the candidate lattice. Depends only on the
/// image extent, cell size, stride and seed, so runs that differ only in
/// rule or acquisition start from the same point.
pub fn initial_fixation(
    width: u32,
    height: u32,
    cell_size: u32,
    stride_cells: usize,
    channels: usize,
    seed: u64,
) -> Result<Point> {
    let map = SemanticMap::new(width, height, cell_size, channels)?;
    let grid = CandidateGrid::for_map(&map, stride_cells)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    Ok(grid.points()[rng.gen_range(0..grid.len())])
}

/// Runs the loop for `config.num_iterations`. A detector failure ends the
/// trace early with `error` set; other errors (bad inputs) are returned.
pub fn explore(
    scene: &Scene,
    config: &ExplorationConfig,
    model: &ObservationModel,
    source: &mut dyn DetectionSource,
    initial: Option<Point>,
) -> Result<ExplorationTrace> {
    config.validate()?;
    let gt = &scene.ground_truth;
    gt.validate(Some(model.num_classes()))?;
    let (w, h) = (gt.width, gt.height);
    if let Some(img) = &scene.image {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::Validation(format!(
                "image {} is {}x{}, ground truth says {w}x{h}",
                gt.image_id,
                img.width(),
                img.height()
            )));
        }
    }

    let mut map = SemanticMap::new(w, h, config.cell_size, model.num_channels())?;
    let grid = CandidateGrid::for_map(&map, config.stride_cells)?;
    let labels = cell_labels(&map, gt);
    let mut history = vec![Vec::new(); map.num_cells()];

    let mut fixation = match initial {
        Some(p) => p,
        None => initial_fixation(w, h, config.cell_size, config.stride_cells, model.num_channels(), config.seed)?,
    };
    let mut planner_rng = ChaCha8Rng::seed_from_u64(config.seed);
    planner_rng.set_stream(1);

    let mut records = Vec::with_capacity(config.num_iterations);
    let mut error = None;
    for step in 0..config.num_iterations {
        let gaze = GazeState::new(fixation, step, w, h)?;
        let foveated = if source.needs_image() {
            let img = scene.image.as_ref().ok_or_else(|| {
                Error::Validation(format!("detector needs pixels but {} has no image", gt.image_id))
            })?;
            Some(foveate(img, fixation, &config.foveation)?)
        } else {
            None
        };
        let frame = Frame {
            ground_truth: gt,
            gaze,
            image: foveated.as_ref(),
        };
        let detections = match source.detect(&frame) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("{} step {step}: detector failed: {e}", gt.image_id);
                error = Some(e.to_string());
                break;
            }
        };

        for det in &detections {
            for cell in map.fuse_detection(det, &gaze, config.rule, model)? {
                history[cell].push(map.argmax_at(cell) == labels[cell]);
            }
        }

        let score = evaluate_f1(&map, gt);
        let observed: Vec<usize> = (0..map.num_cells()).filter(|&i| map.fusions(i) > 0).collect();
        let accuracy = if observed.is_empty() {
            0.0
        } else {
            observed.iter().filter(|&&i| map.argmax_at(i) == labels[i]).count() as f64
                / observed.len() as f64
        };
        records.push(IterationRecord {
            iteration: step,
            fixation,
            num_detections: detections.len(),
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
            accuracy,
            map_kl_from_prior: map.total_kl_from_prior(),
            map_mean_entropy: map.mean_entropy(),
        });

        if step + 1 < config.num_iterations {
            fixation = select_gaze(&map, &grid, config.acquisition, config.rule, model, &mut planner_rng)?;
        }
    }

    Ok(ExplorationTrace {
        config: config.name.clone(),
        image_id: gt.image_id.clone(),
        seed: config.seed,
        records,
        error,
        cell_history: history,
        final_map: map,
    })
}

/// One (scene, config, seed) cell of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunSpec {
    pub scene: usize,
    pub config: usize,
    pub seed: u64,
}

/// Every (scene, seed, config) triple, configs innermost.
pub fn plan_runs(num_scenes: usize, num_configs: usize, seeds: &[u64]) -> Vec<RunSpec> {
    let mut runs = Vec::with_capacity(num_scenes * num_configs * seeds.len());
    for scene in 0..num_scenes {
        for &seed in seeds {
            for config in 0..num_configs {
                runs.push(RunSpec { scene, config, seed });
            }
        }
    }
    runs
}

/// Seed handed to a run's detector: shared by every config on the same
/// (scene, seed) so first-fixation detections coincide.
pub fn detector_seed(scene: usize, seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (scene as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Builds a fresh detector for one run from `(scene, config, detector seed)`.
pub trait SourceFactory: Sync {
    fn make(&self, scene: &Scene, config: &ExplorationConfig, seed: u64) -> Result<Box<dyn DetectionSource>>;
}

impl<F> SourceFactory for F
where
    F: Fn(&Scene, &ExplorationConfig, u64) -> Result<Box<dyn DetectionSource>> + Sync,
{
    fn make(&self, scene: &Scene, config: &ExplorationConfig, seed: u64) -> Result<Box<dyn DetectionSource>> {
        self(scene, config, seed)
    }
}

/// Executes one planned run with the shared initial fixation.
pub fn execute_run(
    run: &RunSpec,
    scenes: &[Scene],
    configs: &[ExplorationConfig],
    model: &ObservationModel,
    factory: &dyn SourceFactory,
) -> Result<ExplorationTrace> {
    let scene = &scenes[run.scene];
    let config = ExplorationConfig {
        seed: run.seed,
        ..configs[run.config].clone()
    };
    let gt = &scene.ground_truth;
    // the lattice of the first config decides the start for everyone
    let first = &configs[0];
    let start = initial_fixation(
        gt.width,
        gt.height,
        first.cell_size,
        first.stride_cells,
        model.num_channels(),
        detector_seed(run.scene, run.seed),
    )?;
    let mut source = factory.make(scene, &config, detector_seed(run.scene, run.seed))?;
    explore(scene, &config, model, source.as_mut(), Some(start))
}

/// Per-config, per-iteration means over successful runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSummary {
    pub config: String,
    pub runs: usize,
    pub failed: usize,
    pub mean_f1: Vec<f64>,
    pub mean_accuracy: Vec<f64>,
    /// `mean_f1 − random's mean_f1`; empty without a random baseline.
    pub delta_f1_vs_random: Vec<f64>,
    pub delta_accuracy_vs_random: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub traces: Vec<ExplorationTrace>,
    pub summaries: Vec<ConfigSummary>,
}

impl ExperimentReport {
    pub fn summary(&self, config: &str) -> Option<&ConfigSummary> {
        self.summaries.iter().find(|s| s.config == config)
    }

    pub fn failed_runs(&self) -> usize {
        self.traces.iter().filter(|t| t.failed()).count()
    }
}

/// Progress hooks for [`run_experiment_observed`].
pub trait RunObserver: Sync {
    /// Runs for which this returns true are not executed.
    fn skip(&self, _run: &RunSpec, _config: &ExplorationConfig, _scene: &Scene) -> bool {
        false
    }

    /// Called from the worker thread as soon as a run finishes.
    fn finished(&self, _run: &RunSpec, _trace: &ExplorationTrace) -> Result<()> {
        Ok(())
    }
}

struct Silent;

impl RunObserver for Silent {}

/// Executes the planned runs not skipped by `observer` on at most `jobs`
/// threads. Results come back in plan order whatever the completion order.
pub fn run_experiment_observed(
    scenes: &[Scene],
    configs: &[ExplorationConfig],
    seeds: &[u64],
    model: &ObservationModel,
    factory: &dyn SourceFactory,
    jobs: usize,
    observer: &dyn RunObserver,
) -> Result<Vec<(RunSpec, ExplorationTrace)>> {
    if configs.is_empty() || scenes.is_empty() || seeds.is_empty() {
        return Err(Error::Validation("experiment needs scenes, configs and seeds".into()));
    }
    for c in configs {
        c.validate()?;
    }
    let runs: Vec<RunSpec> = plan_runs(scenes.len(), configs.len(), seeds)
        .into_iter()
        .filter(|r| !observer.skip(r, &configs[r.config], &scenes[r.scene]))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Contract(e.to_string()))?;
    pool.install(|| {
        runs.par_iter()
            .map(|r| {
                let trace = execute_run(r, scenes, configs, model, factory)?;
                observer.finished(r, &trace)?;
                Ok((*r, trace))
            })
            .collect()
    })
}

/// Runs every (scene, config, seed) combination on at most `jobs` threads.
pub fn run_experiment(
    scenes: &[Scene],
    configs: &[ExplorationConfig],
    seeds: &[u64],
    model: &ObservationModel,
    factory: &dyn SourceFactory,
    jobs: usize,
) -> Result<ExperimentReport> {
    let traces: Vec<ExplorationTrace> = run_experiment_observed(scenes, configs, seeds, model, factory, jobs, &Silent)?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    let summaries = summarize(configs, &traces);
    Ok(ExperimentReport { traces, summaries })
}

/// Aggregates traces per config name, in `configs` order.
pub fn summarize(configs: &[ExplorationConfig], traces: &[ExplorationTrace]) -> Vec<ConfigSummary> {
    let outcomes: Vec<RunOutcome> = traces.iter().map(ExplorationTrace::outcome).collect();
    summarize_outcomes(configs, &outcomes)
}

/// [`summarize`] over bare run outcomes.
pub fn summarize_outcomes(configs: &[ExplorationConfig], runs: &[RunOutcome]) -> Vec<ConfigSummary> {
    let mut out: Vec<ConfigSummary> = configs
        .iter()
        .map(|c| {
            let mine: Vec<&RunOutcome> = runs.iter().filter(|t| t.config == c.name).collect();
            let ok: Vec<&&RunOutcome> = mine.iter().filter(|t| !t.failed).collect();
            let mean = |f: fn(&IterationRecord) -> f64| -> Vec<f64> {
                (0..c.num_iterations)
                    .map(|i| {
                        let vals: Vec<f64> = ok.iter().filter_map(|t| t.records.get(i)).map(f).collect();
                        if vals.is_empty() {
                            f64::NAN
                        } else {
                            vals.iter().sum::<f64>() / vals.len() as f64
                        }
                    })
                    .collect()
            };
            ConfigSummary {
                config: c.name.clone(),
                runs: mine.len(),
                failed: mine.len() - ok.len(),
                mean_f1: mean(|r| r.f1),
                mean_accuracy: mean(|r| r.accuracy),
                delta_f1_vs_random: Vec::new(),
                delta_accuracy_vs_random: Vec::new(),
            }
        })
        .collect();
    let baseline = configs
        .iter()
        .position(|c| c.acquisition == AcquisitionFunction::Random)
        .map(|i| out[i].clone());
    if let Some(base) = baseline {
        for (s, c) in out.iter_mut().zip(configs) {
            if c.acquisition == AcquisitionFunction::Random {
                continue;
            }
            s.delta_f1_vs_random = s.mean_f1.iter().zip(&base.mean_f1).map(|(a, b)| a - b).collect();
            s.delta_accuracy_vs_random = s
                .mean_accuracy
                .iter()
                .zip(&base.mean_accuracy)
                .map(|(a, b)| a - b)
                .collect();
        }
    }
    out
}

/// Appends one CSV row per iteration of `trace` (no header).
pub fn write_trace_rows<W: Write>(out: &mut csv::Writer<W>, trace: &ExplorationTrace) -> Result<()> {
    write_rows(out, &trace.config, &trace.image_id, trace.seed, &trace.records)
}

pub fn write_outcome_rows<W: Write>(out: &mut csv::Writer<W>, run: &RunOutcome) -> Result<()> {
    write_rows(out, &run.config, &run.image_id, run.seed, &run.records)
}

fn write_rows<W: Write>(
    out: &mut csv::Writer<W>,
    config: &str,
    image_id: &str,
    seed: u64,
    records: &[IterationRecord],
) -> Result<()> {
    for r in records {
        out.write_record([
            config.to_string(),
            image_id.to_string(),
            seed.to_string(),
            r.iteration.to_string(),
            r.fixation.x.to_string(),
            r.fixation.y.to_string(),
            r.num_detections.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
            r.accuracy.to_string(),
            r.map_kl_from_prior.to_string(),
            r.map_mean_entropy.to_string(),
        ])
        .map_err(csv_error)?;
    }
    Ok(())
}

pub fn write_traces_csv<W: Write>(out: W, traces: &[ExplorationTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_CSV_HEADER).map_err(csv_error)?;
    for t in traces {
        write_trace_rows(&mut w, t)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_outcomes_csv<W: Write>(out: W, runs: &[RunOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_CSV_HEADER).map_err(csv_error)?;
    for r in runs {
        write_outcome_rows(&mut w, r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Reads rows written by [`write_traces_csv`] back into per-run outcomes,
/// grouping consecutive rows of the same run. CSV rows carry no failure
/// flag, so `failed` is always false.
pub fn read_traces_csv<R: std::io::Read>(input: R) -> Result<Vec<RunOutcome>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(csv_error)?.clone();
    if header.iter().ne(TRACE_CSV_HEADER) {
        return Err(Error::Validation(format!("unexpected trace CSV header {header:?}")));
    }
    let mut out: Vec<RunOutcome> = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row.map_err(csv_error)?;
        let bad = |what: &str| Error::Validation(format!("trace CSV row {}: bad {what}", line + 2));
        let num = |i: usize| row[i].parse::<f64>().map_err(|_| bad(TRACE_CSV_HEADER[i]));
        let seed: u64 = row[2].parse().map_err(|_| bad("seed"))?;
        let record = IterationRecord {
            iteration: row[3].parse().map_err(|_| bad("iteration"))?,
            fixation: Point::new(num(4)?, num(5)?),
            num_detections: row[6].parse().map_err(|_| bad("num_detections"))?,
            precision: num(7)?,
            recall: num(8)?,
            f1: num(9)?,
            accuracy: num(10)?,
            map_kl_from_prior: num(11)?,
            map_mean_entropy: num(12)?,
        };
        match out.last_mut() {
            Some(o) if o.config == row[0] && o.image_id == row[1] && o.seed == seed => o.records.push(record),
            _ => out.push(RunOutcome {
                config: row[0].to_string(),
                image_id: row[1].to_string(),
                seed,
                records: vec![record],
                failed: false,
            }),
        }
    }
    Ok(out)
}

pub const SUMMARY_CSV_HEADER: [&str; 8] = [
    "config",
    "iteration",
    "runs",
    "failed",
    "mean_f1",
    "mean_accuracy",
    "delta_f1_vs_random",
    "delta_accuracy_vs_random",
];

/// Per-iteration means; delta columns are empty without a random baseline.
pub fn write_summary_csv<W: Write>(out: W, summaries: &[ConfigSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_CSV_HEADER).map_err(csv_error)?;
    let opt = |v: &[f64], i: usize| v.get(i).map(|x| x.to_string()).unwrap_or_default();
    for s in summaries {
        for i in 0..s.mean_f1.len() {
            w.write_record([
                s.config.clone(),
                i.to_string(),
                s.runs.to_string(),
                s.failed.to_string(),
                s.mean_f1[i].to_string(),
                s.mean_accuracy[i].to_string(),
                opt(&s.delta_f1_vs_random, i),
                opt(&s.delta_accuracy_vs_random, i),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

fn csv_error(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::new(std::io::ErrorKind::Other, e))
}
