use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use anyhow::{anyhow, Context, Result};
use foveal_core::detection::{GroundTruth, SimulatedDetector};
use foveal_core::explore::{
    plan_runs, read_traces_csv, run_experiment, run_experiment_observed, summarize_outcomes, write_outcome_rows,
    write_outcomes_csv, write_summary_csv, write_traces_csv, ConfigSummary, ExplorationConfig, ExplorationTrace,
    RunObserver, RunOutcome, RunSpec, Scene, TRACE_CSV_HEADER,
};
use foveal_core::foveation::{foveate, FoveationConfig, Image};
use foveal_core::geometry::Point;
use foveal_core::observation::{train, ObservationModel, TrainingFrame};
use foveal_core::synthetic::{generate_scenes, generator_model, render_scene, training_frames};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{binning, bridge_client, load_model, load_scenes, source_factory};
use crate::manifest::{existing, write_text, DetectorKind, RunManifest};
use crate::Invalid;

/// Configured class count, or the largest class id in the ground truth.
fn num_classes(m: &RunManifest, gts: &[&GroundTruth]) -> Result<usize> {
    let seen = gts
        .iter()
        .flat_map(|g| g.objects.iter().map(|o| o.class_id))
        .max()
        .unwrap_or(0);
    let k = m.num_classes.unwrap_or(seen);
    if k == 0 {
        return Err(Invalid("number of classes must be at least 1 (set num_classes)".into()).into());
    }
    if seen > k {
        return Err(Invalid(format!("ground truth uses class {seen} but only {k} classes are configured")).into());
    }
    Ok(k)
}

// ---------------------------------------------------------------- training

pub fn train_obs_model(m: &RunManifest) -> Result<()> {
    let kind = m.detector.kind;
    let scenes = load_scenes(m, kind == DetectorKind::Bridge && !m.detector.server_foveation)?;
    let gts: Vec<&GroundTruth> = scenes.iter().map(|s| &s.ground_truth).collect();
    let k = num_classes(m, &gts)?;
    let bins = binning(m, gts[0])?;
    let per_image = m.training.fixations_per_image;

    let frames: Vec<TrainingFrame> = match kind {
        DetectorKind::Simulated => {
            if per_image == 0 {
                return Err(Invalid("training.fixations_per_image must be positive".into()).into());
            }
            let generator = generator_model(k, bins.clone(), &m.detector.generator)?;
            let mut det = SimulatedDetector::new(m.detector.simulated, generator.into(), m.seed)?;
            let owned: Vec<GroundTruth> = gts.iter().map(|g| (*g).clone()).collect();
            training_frames(&owned, &mut det, per_image, m.seed.wrapping_add(1))?
        }
        DetectorKind::Replay => {
            let path = existing("detections", m.paths.detections.as_deref())?;
            let store = foveal_core::detection::load_detections(path)?;
            let by_id: HashMap<&str, &GroundTruth> = gts.iter().map(|g| (g.image_id.as_str(), *g)).collect();
            store
                .into_iter()
                .map(|(key, detections)| {
                    let gt = by_id.get(key.image_id.as_str()).ok_or_else(|| {
                        Invalid(format!("detections mention image {} with no ground truth", key.image_id))
                    })?;
                    Ok(TrainingFrame {
                        ground_truth: (*gt).clone(),
                        fixation: key.fixation,
                        detections,
                    })
                })
                .collect::<Result<_>>()?
        }
        DetectorKind::Bridge => {
            let client = bridge_client(m, k)?;
            let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
            let mut frames = Vec::new();
            for scene in &scenes {
                let gt = &scene.ground_truth;
                let image = scene
                    .image
                    .as_ref()
                    .ok_or_else(|| Invalid(format!("bridge training needs the image of {}", gt.image_id)))?;
                for _ in 0..per_image {
                    let fixation = Point::new(
                        rng.gen_range(0.0..(gt.width as f64 - 1.0).max(f64::MIN_POSITIVE)),
                        rng.gen_range(0.0..(gt.height as f64 - 1.0).max(f64::MIN_POSITIVE)),
                    );
                    let frame = if m.detector.server_foveation {
                        image.clone()
                    } else {
                        foveate(image, fixation, &m.exploration.foveation)?
                    };
                    let detections = client.detect_image(&frame, fixation)?;
                    frames.push(TrainingFrame {
                        ground_truth: gt.clone(),
                        fixation,
                        detections,
                    });
                }
            }
            frames
        }
    };
    if frames.is_empty() {
        return Err(Invalid("no training frames".into()).into());
    }

    let model = train(&frames, k, bins, m.training.iou_threshold)?;
    let path = m.model_path()?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    model.save(&path)?;
    print_model_summary(&model, frames.len());
    let fallback = model.fallback_cells();
    if !fallback.is_empty() {
        let cells: Vec<String> = fallback.iter().map(|(k, b)| format!("({k},{b})")).collect();
        eprintln!(
            "warning: {} (class, bin) cells had fewer than 2 samples and use the flat prior: {}",
            fallback.len(),
            cells.join(" ")
        );
    }
    println!("model written to {}", path.display());
    Ok(())
}

fn print_model_summary(model: &ObservationModel, frames: usize) {
    println!("trained on {frames} frames; samples per (class, bin), * = fit did not converge");
    let bins = model.binning().num_bins();
    print!("{:>6}", "class");
    for b in 0..bins {
        print!("{:>9}", format!("bin{b}"));
    }
    println!();
    for k in 0..model.num_channels() {
        print!("{k:>6}");
        for b in 0..bins {
            let mark = if model.converged(k, b) { "" } else { "*" };
            print!("{:>9}", format!("{}{mark}", model.count(k, b)));
        }
        println!();
    }
}

// ------------------------------------------------------------- exploration

fn exploration_config(m: &RunManifest) -> ExplorationConfig {
    let e = &m.exploration;
    ExplorationConfig {
        name: format!("{}+{}", e.acquisition, e.rule),
        num_iterations: e.iterations,
        rule: e.rule,
        acquisition: e.acquisition,
        seed: m.seed,
        cell_size: e.cell_size,
        stride_cells: e.stride_cells,
        foveation: e.foveation,
    }
}

#[derive(Serialize)]
struct MapFile<'a> {
    image_id: &'a str,
    config: &'a str,
    seed: u64,
    iterations: usize,
    error: Option<&'a str>,
    map: foveal_core::map::MapSnapshot,
}

pub fn explore(m: &RunManifest) -> Result<()> {
    let model = load_model(m)?;
    let config = exploration_config(m);
    config.validate()?;
    let scenes = load_scenes(m, m.detector.kind == DetectorKind::Bridge)?;
    let factory = source_factory(m, &model, &scenes)?;
    let out = m.output_dir()?;
    let report = run_experiment(&scenes, &[config], &[m.seed], &model, factory.as_ref(), m.jobs)?;

    for t in &report.traces {
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, std::slice::from_ref(t))?;
        write_text(&out.join("traces").join(format!("{}.csv", t.image_id)), std::str::from_utf8(&buf)?)?;
        let snapshot = MapFile {
            image_id: &t.image_id,
            config: &t.config,
            seed: t.seed,
            iterations: t.records.len(),
            error: t.error.as_deref(),
            map: t.final_map.snapshot(),
        };
        write_text(
            &out.join("maps").join(format!("{}.json", t.image_id)),
            &serde_json::to_string_pretty(&snapshot)?,
        )?;
        match (&t.error, t.final_f1()) {
            (Some(e), _) => println!("{}: failed after {} iterations: {e}", t.image_id, t.records.len()),
            (None, Some(f1)) => println!("{}: final F1 {f1:.4}", t.image_id),
            (None, None) => {}
        }
    }
    let failed: Vec<&ExplorationTrace> = report.traces.iter().filter(|t| t.failed()).collect();
    if let Some(first) = failed.first() {
        return Err(anyhow!(
            "{} of {} runs failed; first error ({}): {}",
            failed.len(),
            report.traces.len(),
            first.image_id,
            first.error.as_deref().unwrap_or_default()
        ));
    }
    Ok(())
}

// -------------------------------------------------------------- comparison

/// One finished run as recorded in the progress sidecar.
#[derive(Debug, Serialize, Deserialize)]
struct ProgressEntry {
    config: String,
    image_id: String,
    seed: u64,
    failed: bool,
}

/// First line of the sidecar: what the experiment was, so a changed
/// manifest cannot silently resume someone else's runs.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct ProgressHeader {
    configs: Vec<ExplorationConfig>,
    seeds: Vec<u64>,
    images: Vec<String>,
}

type RunKey = (String, String, u64);

struct Progress {
    done: HashSet<RunKey>,
    csv: Mutex<csv::Writer<File>>,
    log: Mutex<BufWriter<File>>,
}

impl RunObserver for Progress {
    fn skip(&self, run: &RunSpec, config: &ExplorationConfig, scene: &Scene) -> bool {
        self.done
            .contains(&(config.name.clone(), scene.ground_truth.image_id.clone(), run.seed))
    }

    fn finished(&self, _run: &RunSpec, trace: &ExplorationTrace) -> foveal_core::Result<()> {
        let io = |e: std::io::Error| foveal_core::Error::io("<progress>", e);
        {
            let mut w = self.csv.lock().expect("csv lock");
            foveal_core::explore::write_trace_rows(&mut w, trace)?;
            w.flush().map_err(io)?;
        }
        let entry = ProgressEntry {
            config: trace.config.clone(),
            image_id: trace.image_id.clone(),
            seed: trace.seed,
            failed: trace.failed(),
        };
        let mut log = self.log.lock().expect("progress lock");
        writeln!(log, "{}", serde_json::to_string(&entry).expect("entry serializes")).map_err(io)?;
        log.flush().map_err(io)
    }
}

pub struct CompareOptions {
    pub fresh: bool,
}

pub fn compare(m: &RunManifest, opts: &CompareOptions) -> Result<()> {
    let model = load_model(m)?;
    if m.compare.policies.is_empty() || m.compare.seeds.is_empty() {
        return Err(Invalid("compare needs at least one policy and one seed".into()).into());
    }
    let base = exploration_config(m);
    let configs: Vec<ExplorationConfig> = m
        .compare
        .policies
        .iter()
        .map(|p| ExplorationConfig {
            name: p.name(),
            rule: p.rule,
            acquisition: p.acquisition,
            ..base.clone()
        })
        .collect();
    let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Invalid(format!("policy name {} is used twice", w[0])).into());
    }
    for c in &configs {
        c.validate()?;
    }
    let scenes = load_scenes(m, m.detector.kind == DetectorKind::Bridge)?;
    let factory = source_factory(m, &model, &scenes)?;
    let seeds = m.compare.seeds.clone();

    let out = m.output_dir()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join("compare.csv");
    let progress_path = out.join("compare.csv.progress");
    let header = ProgressHeader {
        configs: configs.clone(),
        seeds: seeds.clone(),
        images: scenes.iter().map(|s| s.ground_truth.image_id.clone()).collect(),
    };

    let mut prior: Vec<RunOutcome> = Vec::new();
    if !opts.fresh && progress_path.exists() && csv_path.exists() {
        prior = resume_state(&progress_path, &csv_path, &header)?;
        eprintln!(
            "resuming: {} of {} runs already recorded",
            prior.len(),
            configs.len() * seeds.len() * scenes.len()
        );
    }

    // rewrite both files from the recovered state, dropping rows of runs
    // that never reached the progress log
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    w.write_record(TRACE_CSV_HEADER)?;
    for r in &prior {
        write_outcome_rows(&mut w, r)?;
    }
    w.flush()?;
    let mut log = BufWriter::new(File::create(&progress_path).with_context(|| format!("creating {}", progress_path.display()))?);
    writeln!(log, "{}", serde_json::to_string(&header)?)?;
    for r in &prior {
        let e = ProgressEntry {
            config: r.config.clone(),
            image_id: r.image_id.clone(),
            seed: r.seed,
            failed: r.failed,
        };
        writeln!(log, "{}", serde_json::to_string(&e)?)?;
    }
    log.flush()?;
    let progress = Progress {
        done: prior.iter().map(|r| (r.config.clone(), r.image_id.clone(), r.seed)).collect(),
        csv: Mutex::new(w),
        log: Mutex::new(log),
    };

    let fresh =
        run_experiment_observed(&scenes, &configs, &seeds, &model, factory.as_ref(), m.jobs, &progress)?;
    drop(progress);

    // final files in plan order, so reruns produce identical bytes
    let mut all: HashMap<RunKey, RunOutcome> = prior
        .into_iter()
        .chain(fresh.iter().map(|(_, t)| t.outcome()))
        .map(|r| ((r.config.clone(), r.image_id.clone(), r.seed), r))
        .collect();
    let ordered: Vec<RunOutcome> = plan_runs(scenes.len(), configs.len(), &seeds)
        .iter()
        .filter_map(|r| {
            all.remove(&(
                configs[r.config].name.clone(),
                scenes[r.scene].ground_truth.image_id.clone(),
                r.seed,
            ))
        })
        .collect();
    write_outcomes_csv(File::create(&csv_path)?, &ordered)?;
    let summaries = summarize_outcomes(&configs, &ordered);
    write_summary_csv(File::create(out.join("compare_summary.csv"))?, &summaries)?;
    fs::remove_file(&progress_path).with_context(|| format!("removing {}", progress_path.display()))?;
    print_comparison(&summaries);

    let failed = ordered.iter().filter(|r| r.failed).count();
    if failed > 0 {
        return Err(anyhow!("{failed} of {} runs failed; see compare.csv", ordered.len()));
    }
    Ok(())
}

/// Runs listed in the sidecar, with their rows from the CSV.
fn resume_state(progress: &Path, csv_path: &Path, header: &ProgressHeader) -> Result<Vec<RunOutcome>> {
    let reader = BufReader::new(File::open(progress)?);
    let mut lines = reader.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    let recorded: ProgressHeader = serde_json::from_str(&first)
        .map_err(|e| Invalid(format!("corrupt progress file {}: {e}", progress.display())))?;
    if &recorded != header {
        return Err(Invalid(format!(
            "{} belongs to a different experiment; rerun with --fresh to discard it",
            progress.display()
        ))
        .into());
    }
    let mut failed: HashMap<RunKey, bool> = HashMap::new();
    for line in lines {
        let line = line?;
        // a torn last line means that run's rows are not trustworthy
        let Ok(e) = serde_json::from_str::<ProgressEntry>(&line) else {
            warn!("ignoring unreadable progress line {line:?}");
            continue;
        };
        failed.insert((e.config, e.image_id, e.seed), e.failed);
    }
    let rows = read_traces_csv(File::open(csv_path)?).with_context(|| format!("reading {}", csv_path.display()))?;
    let mut out = Vec::new();
    for mut r in rows {
        if let Some(f) = failed.remove(&(r.config.clone(), r.image_id.clone(), r.seed)) {
            r.failed = f;
            out.push(r);
        }
    }
    // failed-at-first-step runs have no rows
    for ((config, image_id, seed), f) in failed {
        out.push(RunOutcome {
            config,
            image_id,
            seed,
            records: Vec::new(),
            failed: f,
        });
    }
    info!("recovered {} finished runs", out.len());
    Ok(out)
}

fn print_comparison(summaries: &[ConfigSummary]) {
    println!("{:<32} {:>5} {:>7} {:>9} {:>12}", "config", "runs", "failed", "final F1", "vs random");
    for s in summaries {
        let last = |v: &[f64]| v.last().map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        let delta = s.delta_f1_vs_random.last().map(|x| format!("{x:+.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<32} {:>5} {:>7} {:>9} {:>12}",
            s.config,
            s.runs,
            s.failed,
            last(&s.mean_f1),
            delta
        );
    }
}

// ------------------------------------------------------------------ debug

pub fn foveate_image(image: &Path, fixation: Point, config: &FoveationConfig, out: &Path) -> Result<()> {
    let img = Image::read_png(existing("image", Some(image))?)?;
    let result = foveate(&img, fixation, config)?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    result.write_png(out)?;
    println!("foveated image written to {}", out.display());
    Ok(())
}

pub fn simulate_dataset(m: &RunManifest) -> Result<()> {
    let d = &m.dataset;
    if d.count == 0 {
        return Err(Invalid("dataset.count must be positive".into()).into());
    }
    let out = m.output_dir()?;
    let gts = generate_scenes(&d.scene, d.count, m.seed);
    let gt_dir = out.join("ground_truth");
    let img_dir = out.join("images");
    fs::create_dir_all(&gt_dir).with_context(|| format!("creating {}", gt_dir.display()))?;
    for (i, gt) in gts.iter().enumerate() {
        foveal_core::detection::write_ground_truth(gt, gt_dir.join(format!("{}.json", gt.image_id)))?;
        if d.render_images {
            fs::create_dir_all(&img_dir).with_context(|| format!("creating {}", img_dir.display()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(m.seed.wrapping_add(i as u64 + 1));
            render_scene(gt, &mut rng).write_png(img_dir.join(format!("{}.png", gt.image_id)))?;
        }
    }

    // a manifest next to the data so the other commands can start from it
    let mut next = m.clone();
    next.paths.ground_truth = Some("ground_truth".into());
    next.paths.images = d.render_images.then(|| "images".into());
    next.paths.model = Some("model.json".into());
    next.paths.output_dir = Some("runs".into());
    next.paths.detections = None;
    next.num_classes = Some(d.scene.num_classes);
    let text = toml::to_string_pretty(&next)?;
    write_text(&out.join("manifest.toml"), &text)?;
    let objects: usize = gts.iter().map(|g| g.objects.len()).sum();
    println!(
        "{} scenes with {objects} objects written to {}; manifest at {}",
        gts.len(),
        out.display(),
        out.join("manifest.toml").display()
    );
    Ok(())
}
