use std::sync::{Arc, Mutex};

use foveal_core::detection::{Detection, DetectionSource, Frame, SimulatedDetector, SimulatedDetectorConfig};
use foveal_core::explore::{
    explore, plan_runs, read_traces_csv, run_experiment, run_experiment_observed, summarize_outcomes,
    write_summary_csv, write_traces_csv, ExplorationConfig, ExplorationTrace, ExperimentReport, RunObserver, RunSpec,
    Scene, SUMMARY_CSV_HEADER, TRACE_CSV_HEADER,
};
use foveal_core::map::FusionRule;
use foveal_core::planner::AcquisitionFunction;
use foveal_core::synthetic::{render_scene, Benchmark, BenchmarkSpec, SceneSpec};
use foveal_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_bench() -> Benchmark {
    Benchmark::build(&BenchmarkSpec {
        scene: SceneSpec {
            width: 192,
            height: 144,
            num_classes: 3,
            objects: (2, 4),
            object_size: (20.0, 40.0),
            cluster_fraction: 0.6,
        },
        num_scenes: 3,
        training_scenes: 8,
        fixations_per_training_scene: 80,
        seed: 11,
        ..Default::default()
    })
    .unwrap()
}

fn config(name: &str, rule: FusionRule, f: AcquisitionFunction, iterations: usize) -> ExplorationConfig {
    ExplorationConfig {
        name: name.into(),
        num_iterations: iterations,
        ..ExplorationConfig::new(rule, f)
    }
}

fn run(bench: &Benchmark, configs: &[ExplorationConfig], seeds: &[u64], jobs: usize) -> ExperimentReport {
    run_experiment(&bench.pixel_free_scenes(), configs, seeds, &bench.model, &bench.detector_factory(), jobs).unwrap()
}

#[test]
fn experiments_are_deterministic_across_thread_counts() {
    let bench = small_bench();
    let configs = [
        config("random", FusionRule::KaplanModified, AcquisitionFunction::Random, 4),
        config("kl", FusionRule::KaplanModified, AcquisitionFunction::KlGain, 4),
    ];
    let a = run(&bench, &configs, &[1, 2], 1);
    let b = run(&bench, &configs, &[1, 2], 3);
    assert_eq!(a.traces.len(), b.traces.len());
    for (x, y) in a.traces.iter().zip(&b.traces) {
        assert_eq!((&x.config, &x.image_id, x.seed), (&y.config, &y.image_id, y.seed));
        assert_eq!(x.records, y.records);
    }
    assert_eq!(a.summaries, b.summaries);
}

#[test]
fn configs_share_the_first_fixation_then_diverge() {
    let bench = small_bench();
    let configs = [
        config("random", FusionRule::KaplanModified, AcquisitionFunction::Random, 6),
        config("kl", FusionRule::KaplanModified, AcquisitionFunction::KlGain, 6),
    ];
    let report = run(&bench, &configs, &[5], 1);
    let mut diverged = 0;
    for scene in &bench.scenes {
        let of = |name: &str| {
            report
                .traces
                .iter()
                .find(|t| t.config == name && t.image_id == scene.image_id)
                .unwrap()
        };
        let (r, k) = (of("random"), of("kl"));
        assert_eq!(r.records[0].fixation, k.records[0].fixation);
        diverged += r.records.iter().zip(&k.records).any(|(a, b)| a.fixation != b.fixation) as usize;
    }
    assert!(diverged > 0);
}

#[test]
fn identical_configs_give_identical_curves() {
    let bench = small_bench();
    let a = config("a", FusionRule::Sum, AcquisitionFunction::DirichletEntropy, 5);
    let b = ExplorationConfig { name: "b".into(), ..a.clone() };
    let report = run(&bench, &[a, b], &[1, 2, 3], 2);
    let (sa, sb) = (report.summary("a").unwrap(), report.summary("b").unwrap());
    assert_eq!(sa.mean_f1, sb.mean_f1);
    assert_eq!(sa.mean_accuracy, sb.mean_accuracy);
    // no random config, no deltas
    assert!(sa.delta_f1_vs_random.is_empty());
}

#[test]
fn noise_free_sum_fusion_improves_f1() {
    let mut bench = small_bench();
    bench.detector = SimulatedDetectorConfig::noise_free();
    let c = config("sum", FusionRule::Sum, AcquisitionFunction::KlGain, 8);
    let seeds: Vec<u64> = (0..10).collect();
    let report = run(&bench, &[c], &seeds, 1);
    let f1 = &report.summaries[0].mean_f1;
    assert!(f1.iter().all(|v| v.is_finite()));
    assert!(f1[f1.len() - 1] > f1[0], "{f1:?}");
    assert!(f1[f1.len() - 1] > 0.8, "{f1:?}");
}

#[test]
fn reports_have_one_row_per_iteration() {
    let bench = small_bench();
    let configs = [
        config("random", FusionRule::Product, AcquisitionFunction::Random, 3),
        config("two", FusionRule::Product, AcquisitionFunction::TwoPeaks, 3),
    ];
    let report = run(&bench, &configs, &[1, 2], 1);
    assert_eq!(report.traces.len(), 3 * 2 * 2);
    assert_eq!(report.failed_runs(), 0);

    let mut traces = Vec::new();
    write_traces_csv(&mut traces, &report.traces).unwrap();
    let mut rd = csv::Reader::from_reader(traces.as_slice());
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), TRACE_CSV_HEADER);
    assert_eq!(rd.records().count(), 3 * 2 * 2 * 3);

    let mut summary = Vec::new();
    write_summary_csv(&mut summary, &report.summaries).unwrap();
    let mut rd = csv::Reader::from_reader(summary.as_slice());
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), SUMMARY_CSV_HEADER);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2 * 3);
    // the baseline has no delta, the active config does
    assert_eq!(&rows[0][6], "");
    assert!(rows[3][6].parse::<f64>().is_ok());
}

/// Delegates to a simulator and fails from call `fail_at` on.
struct Flaky {
    inner: SimulatedDetector,
    calls: usize,
    fail_at: usize,
}

impl DetectionSource for Flaky {
    fn needs_image(&self) -> bool {
        false
    }

    fn detect(&mut self, frame: &Frame<'_>) -> Result<Vec<Detection>> {
        self.calls += 1;
        if self.calls > self.fail_at {
            return Err(Error::DetectorFailure { status: 500, message: "boom".into() });
        }
        self.inner.detect(frame)
    }
}

#[test]
fn detector_failures_truncate_and_are_counted() {
    let bench = small_bench();
    let generator = bench.generator.clone();
    let detector = bench.detector;
    let factory = move |scene: &Scene, _: &ExplorationConfig, seed: u64| -> Result<Box<dyn DetectionSource>> {
        let fail_at = if scene.ground_truth.image_id.ends_with('1') { 2 } else { usize::MAX };
        Ok(Box::new(Flaky {
            inner: SimulatedDetector::new(detector, generator.clone(), seed)?,
            calls: 0,
            fail_at,
        }))
    };
    let c = config("kl", FusionRule::KaplanModified, AcquisitionFunction::KlGain, 5);
    let report = run_experiment(&bench.pixel_free_scenes(), &[c], &[1, 2], &bench.model, &factory, 1).unwrap();
    assert_eq!(report.failed_runs(), 2);
    for t in &report.traces {
        if t.image_id.ends_with('1') {
            assert!(t.failed());
            assert_eq!(t.records.len(), 2);
            assert!(t.error.as_deref().unwrap().contains("boom"));
        } else {
            assert_eq!(t.records.len(), 5);
        }
    }
    let s = &report.summaries[0];
    assert_eq!((s.runs, s.failed), (6, 2));
    assert!(s.mean_f1.iter().all(|v| v.is_finite()));
}

/// Records the shape of every frame it is handed.
struct NeedsPixels(Vec<(u32, u32)>);

impl DetectionSource for NeedsPixels {
    fn needs_image(&self) -> bool {
        true
    }

    fn detect(&mut self, frame: &Frame<'_>) -> Result<Vec<Detection>> {
        let img = frame.image.expect("foveated frame");
        self.0.push((img.width(), img.height()));
        Ok(Vec::new())
    }
}

#[test]
fn pixel_sources_get_foveated_frames_and_reject_missing_pixels() {
    let bench = small_bench();
    let gt = bench.scenes[0].clone();
    let img = render_scene(&gt, &mut ChaCha8Rng::seed_from_u64(1));
    let c = config("kl", FusionRule::KaplanModified, AcquisitionFunction::KlGain, 3);

    let mut src = NeedsPixels(Vec::new());
    let trace = explore(&Scene::new(gt.clone(), Some(img)), &c, &bench.model, &mut src, None).unwrap();
    assert_eq!(trace.records.len(), 3);
    assert_eq!(src.0, vec![(gt.width, gt.height); 3]);

    let err = explore(&Scene::new(gt, None), &c, &bench.model, &mut NeedsPixels(Vec::new()), None).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn invalid_inputs_are_rejected_before_running() {
    let bench = small_bench();
    let scene = &bench.pixel_free_scenes()[0];
    let mut det = SimulatedDetector::new(bench.detector, Arc::clone(&bench.generator), 0).unwrap();
    let zero = config("z", FusionRule::Sum, AcquisitionFunction::KlGain, 0);
    assert!(explore(scene, &zero, &bench.model, &mut det, None).unwrap_err().is_validation());

    let mut gt = scene.ground_truth.clone();
    gt.objects[0].class_id = 99;
    let ok = config("k", FusionRule::Sum, AcquisitionFunction::KlGain, 2);
    assert!(explore(&Scene::new(gt, None), &ok, &bench.model, &mut det, None).is_err());

    let err = run_experiment(&[], &[ok], &[1], &bench.model, &bench.detector_factory(), 1).unwrap_err();
    assert!(err.is_validation());
}

#[test]
fn trace_csv_reads_back_into_outcomes() {
    let bench = small_bench();
    let configs = [config("kl", FusionRule::KaplanModified, AcquisitionFunction::KlGain, 3)];
    let report = run(&bench, &configs, &[1, 2], 1);
    let mut buf = Vec::new();
    write_traces_csv(&mut buf, &report.traces).unwrap();
    let back = read_traces_csv(buf.as_slice()).unwrap();
    let want: Vec<_> = report.traces.iter().map(|t| t.outcome()).collect();
    assert_eq!(back, want);
    assert_eq!(summarize_outcomes(&configs, &back), report.summaries);
    assert!(read_traces_csv("a,b\n1,2\n".as_bytes()).unwrap_err().is_validation());
}

/// Skips every run of seed 1 and counts the rest.
struct SkipSeedOne(Mutex<Vec<RunSpec>>);

impl RunObserver for SkipSeedOne {
    fn skip(&self, run: &RunSpec, _: &ExplorationConfig, _: &Scene) -> bool {
        run.seed == 1
    }

    fn finished(&self, run: &RunSpec, trace: &ExplorationTrace) -> Result<()> {
        assert_eq!(trace.seed, run.seed);
        self.0.lock().unwrap().push(*run);
        Ok(())
    }
}

#[test]
fn observed_runs_skip_and_report_in_plan_order() {
    let bench = small_bench();
    let configs = [config("kl", FusionRule::KaplanModified, AcquisitionFunction::KlGain, 2)];
    let observer = SkipSeedOne(Mutex::new(Vec::new()));
    let scenes = bench.pixel_free_scenes();
    let done =
        run_experiment_observed(&scenes, &configs, &[1, 2], &bench.model, &bench.detector_factory(), 2, &observer)
            .unwrap();
    let specs: Vec<RunSpec> = done.iter().map(|(r, _)| *r).collect();
    assert_eq!(specs, plan_runs(3, 1, &[2]));
    let mut seen = observer.0.into_inner().unwrap();
    seen.sort_by_key(|r| r.scene);
    assert_eq!(seen, specs);

    // the skipped runs would have produced the same traces as a full run
    let full = run(&bench, &configs, &[1, 2], 1);
    for (_, t) in &done {
        let same = full.traces.iter().find(|f| f.image_id == t.image_id && f.seed == t.seed).unwrap();
        assert_eq!(same.records, t.records);
    }
}
