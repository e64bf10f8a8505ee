//! `foveal`: train observation models, explore scenes and compare gaze
//! policies.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input.

mod commands;
mod data;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use foveal_core::foveation::FoveationConfig;
use foveal_core::geometry::Point;
use foveal_core::map::FusionRule;
use foveal_core::planner::AcquisitionFunction;

use crate::manifest::{DetectorKind, Policy, RunManifest};

/// Bad user input: exit code 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(name = "foveal", version, about = "Active gaze exploration over a Dirichlet semantic map")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the per-(class, distance bin) observation model from detections
    /// at random fixations.
    TrainObsModel(Common),
    /// Run the gaze loop on every image; one trace CSV and final map per image.
    Explore(ExploreArgs),
    /// Run every policy on every image and seed; resumable.
    Compare(CompareArgs),
    /// Write a foveated copy of one PNG (debugging aid).
    Foveate(FoveateArgs),
    /// Generate synthetic scenes, ground truth and a starter manifest.
    SimulateDataset(SimulateArgs),
}

/// Flags shared by every subcommand; each overrides the manifest key of the
/// same name.
#[derive(Args)]
struct Common {
    /// TOML run manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Object classes K, background excluded.
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Ground-truth JSON file or directory.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Directory of `<image_id>.png`.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Recorded detections (JSON lines) for `--detector replay`.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Observation-model file.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    detector: Option<DetectorKind>,
    /// Bridge URL, e.g. http://127.0.0.1:8000
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    timeout_secs: Option<f64>,
}

#[derive(Args)]
struct LoopArgs {
    #[arg(long)]
    iterations: Option<usize>,
    /// product | sum | kaplan_raw | kaplan_modified
    #[arg(long)]
    rule: Option<FusionRule>,
    /// kl_gain | dirichlet_entropy | two_peaks | random
    #[arg(long)]
    acquisition: Option<AcquisitionFunction>,
    #[arg(long)]
    cell_size: Option<u32>,
    /// Candidate fixation spacing in cells.
    #[arg(long)]
    stride_cells: Option<usize>,
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    run: LoopArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    run: LoopArgs,
    /// Policy as `acquisition+rule`; repeat for several.
    #[arg(long = "policy", value_parser = parse_policy)]
    policies: Vec<Policy>,
    /// Comma-separated repetition seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Ignore and discard an interrupted run's progress.
    #[arg(long)]
    fresh: bool,
}

#[derive(Args)]
struct FoveateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    image: PathBuf,
    /// Fixation as `x,y` in pixels.
    #[arg(long, value_parser = parse_point)]
    fixation: Point,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    sigma0: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of scenes.
    #[arg(long)]
    count: Option<usize>,
    /// Skip rendering PNGs.
    #[arg(long)]
    no_images: bool,
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Point::new(p(x)?, p(y)?))
}

fn parse_policy(s: &str) -> std::result::Result<Policy, String> {
    let (a, r) = s.split_once('+').ok_or("expected acquisition+rule")?;
    Ok(Policy {
        name: None,
        acquisition: a.parse().map_err(|e| format!("{e}"))?,
        rule: r.parse().map_err(|e| format!("{e}"))?,
    })
}

impl Common {
    fn manifest(&self) -> Result<RunManifest> {
        let mut m = match &self.manifest {
            Some(p) => RunManifest::load(p)?,
            None => RunManifest::default(),
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag.clone() {
                    m.$($field)+ = v;
                }
            };
        }
        set!(self.seed => seed);
        set!(self.jobs => jobs);
        set!(self.detector => detector.kind);
        set!(self.timeout_secs => detector.timeout_secs);
        if self.num_classes.is_some() {
            m.num_classes = self.num_classes;
        }
        if self.endpoint.is_some() {
            m.detector.endpoint = self.endpoint.clone();
        }
        let paths = &mut m.paths;
        for (flag, slot) in [
            (&self.output_dir, &mut paths.output_dir),
            (&self.ground_truth, &mut paths.ground_truth),
            (&self.images, &mut paths.images),
            (&self.detections, &mut paths.detections),
            (&self.model, &mut paths.model),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
        Ok(m)
    }
}

impl LoopArgs {
    fn apply(&self, m: &mut RunManifest) {
        let e = &mut m.exploration;
        if let Some(v) = self.iterations {
            e.iterations = v;
        }
        if let Some(v) = self.rule {
            e.rule = v;
        }
        if let Some(v) = self.acquisition {
            e.acquisition = v;
        }
        if let Some(v) = self.cell_size {
            e.cell_size = v;
        }
        if let Some(v) = self.stride_cells {
            e.stride_cells = v;
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainObsModel(c) => commands::train_obs_model(&c.manifest()?),
        Command::Explore(a) => {
            let mut m = a.common.manifest()?;
            a.run.apply(&mut m);
            commands::explore(&m)
        }
        Command::Compare(a) => {
            let mut m = a.common.manifest()?;
            a.run.apply(&mut m);
            if !a.policies.is_empty() {
                m.compare.policies = a.policies;
            }
            if let Some(s) = a.seeds {
                m.compare.seeds = s;
            }
            commands::compare(&m, &commands::CompareOptions { fresh: a.fresh })
        }
        Command::Foveate(a) => {
            let m = a.common.manifest()?;
            let config = FoveationConfig {
                levels: a.levels.unwrap_or(m.exploration.foveation.levels),
                sigma0: a.sigma0.unwrap_or(m.exploration.foveation.sigma0),
                ..m.exploration.foveation
            };
            commands::foveate_image(&a.image, a.fixation, &config, &a.out)
        }
        Command::SimulateDataset(a) => {
            let mut m = a.common.manifest()?;
            if let Some(n) = a.count {
                m.dataset.count = n;
            }
            if a.no_images {
                m.dataset.render_images = false;
            }
            commands::simulate_dataset(&m)
        }
    }
}

/// 2 when any cause in the chain is an input problem, else 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<foveal_core::Error>() {
            return if e.is_validation() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
