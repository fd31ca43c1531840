//! `constel` command line: map building, fruit re-identification,
//! localization, and the synthetic benchmark suite.

mod config;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use constel::constellations::PointCloud;
use constel::geom::{rotation_about_axis, GeomError, SimilarityTransform, Vec3};
use constel::mapstore::{build_map, full_precision, ConstellationMap, MapError};
use constel::matcher::{evaluate, match_clouds, MatchError, MatchResult};
use constel::synthbench::{
    gen_orchard, matching_experiment, occlusion_noise_experiment, robustness_csv, trajectory_csv,
    trajectory_experiment, OrchardSpec, PerturbSpec, TrajectorySpec,
};

use config::{parse_grid, ConfigFlags, RunConfig};

#[derive(Parser)]
#[command(
    name = "constel",
    version,
    about = "Map, re-identify, and localize sparse fruit clouds by constellation matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Subcommand)]
enum Command {
    /// Build a constellation map from a fruit cloud file.
    BuildMap(BuildMapArgs),
    /// Match a query cloud against a map; write correspondences and pose.
    Match(MatchArgs),
    /// Match a query cloud against a map; write the pose only.
    Localize(LocalizeArgs),
    /// Generate synthetic scenes.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
    /// Run the benchmark experiments.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

/// Unit interpretation of an input cloud.
#[derive(Args)]
struct MetricFlags {
    /// Treat the cloud's units as metric (the default for CSV inputs).
    #[arg(long, conflicts_with = "no_metric")]
    metric: bool,
    /// Treat the cloud's units as arbitrary; matching then recovers scale.
    #[arg(long)]
    no_metric: bool,
}

impl MetricFlags {
    fn resolve(&self) -> Option<bool> {
        if self.metric {
            Some(true)
        } else if self.no_metric {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Args)]
struct BuildMapArgs {
    /// Input cloud (CSV `id,x,y,z,frames_seen` or JSON).
    input: PathBuf,
    /// Output map path (JSON).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    metric: MetricFlags,
}

#[derive(Args)]
struct MatchArgs {
    /// Map file produced by build-map.
    map: PathBuf,
    /// Query cloud (CSV or JSON).
    query: PathBuf,
    /// Output directory for matches.csv and pose.json.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth pairs (CSV `query_id,map_id`); prints an evaluation
    /// report as JSON to standard output.
    #[arg(long = "ground-truth")]
    ground_truth: Option<PathBuf>,
    #[command(flatten)]
    metric: MetricFlags,
}

#[derive(Args)]
struct LocalizeArgs {
    /// Map file produced by build-map.
    map: PathBuf,
    /// Query cloud (CSV or JSON).
    query: PathBuf,
    /// Output pose file (JSON).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    metric: MetricFlags,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write a synthetic orchard cloud as CSV.
    Orchard(OrchardArgs),
}

#[derive(Args)]
struct OrchardArgs {
    /// Output cloud path (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Trees in the row.
    #[arg(long)]
    trees: Option<usize>,
    /// Mean fruits per tree.
    #[arg(long = "fruits-mean")]
    fruits_mean: Option<u32>,
    /// Half-width of the fruits-per-tree range.
    #[arg(long = "fruits-spread")]
    fruits_spread: Option<u32>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Occlusion × noise sweep; writes robustness.csv and robustness.json.
    Robustness(RobustnessArgs),
    /// Repeated matching under a planted perturbation; writes
    /// matching.csv and matching.json.
    Matching(MatchingArgs),
    /// Camera-path localization; writes trajectory.csv and
    /// trajectory.json.
    Trajectory(TrajectoryArgs),
}

#[derive(Args)]
struct RobustnessArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Cloud to perturb; defaults to the standard synthetic orchard.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Occlusion grid: a value, a comma list, or start:end:step.
    #[arg(long, default_value = "0:0.45:0.05")]
    occlusion: String,
    /// Noise std grid (m): a value, a comma list, or start:end:step.
    #[arg(long, default_value = "0:0.10:0.01")]
    noise: String,
    /// Perturbation repeats per grid cell.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[command(flatten)]
    metric: MetricFlags,
}

#[derive(Args)]
struct MatchingArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Fraction of fruits occluded in the query copy.
    #[arg(long, default_value_t = 0.2)]
    occlusion: f64,
    /// Detection noise std in the query copy (m).
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Matching runs over the same perturbed detections.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
}

#[derive(Args)]
struct TrajectoryArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Cloud to localize against; defaults to the standard orchard.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Camera frames along the path.
    #[arg(long, default_value_t = 8)]
    frames: usize,
    /// Detection noise std (m).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[command(flatten)]
    metric: MetricFlags,
}

struct CliError {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> CliError {
    CliError {
        code,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::resolve(&cli.flags).map_err(|m| fail(1, m))?;
    match cli.command {
        Command::BuildMap(args) => cmd_build_map(args, &config),
        Command::Match(args) => cmd_match(args, &config),
        Command::Localize(args) => cmd_localize(args, &config),
        Command::Synth {
            command: SynthCommand::Orchard(args),
        } => cmd_synth_orchard(args, &config),
        Command::Bench { command } => match command {
            BenchCommand::Robustness(args) => cmd_bench_robustness(args, &config),
            BenchCommand::Matching(args) => cmd_bench_matching(args, &config),
            BenchCommand::Trajectory(args) => cmd_bench_trajectory(args, &config),
        },
    }
}

fn cmd_build_map(args: BuildMapArgs, config: &RunConfig) -> Result<(), CliError> {
    let cloud = io::read_cloud(&args.input, args.metric.resolve()).map_err(|m| fail(1, m))?;
    let start = Instant::now();
    let map = build_map(&cloud, &config.enumeration).map_err(|e| match e {
        MapError::TooFewPoints { .. } => fail(2, e.to_string()),
        other => fail(1, other.to_string()),
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    map.save(&args.out)
        .map_err(|e| fail(1, format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "built map {}: {} entries from {} fruits in {elapsed:.3} s",
        args.out.display(),
        map.entries().len(),
        map.fruit_count()
    );
    Ok(())
}

/// Shared match runner; maps match failures to exit code 3 and everything
/// else to 1.
fn run_match(
    map_path: &Path,
    query_path: &Path,
    metric: Option<bool>,
    config: &RunConfig,
) -> Result<(PointCloud, ConstellationMap, MatchResult), CliError> {
    let map = ConstellationMap::load(map_path)
        .map_err(|e| fail(1, format!("{}: {e}", map_path.display())))?;
    let query = io::read_cloud(query_path, metric).map_err(|m| fail(1, m))?;
    let result = match_clouds(&query, &map, &config.matching).map_err(|e| match &e {
        MatchError::InsufficientMatches { .. }
        | MatchError::Geom(GeomError::NoConsensus { .. })
        | MatchError::Geom(GeomError::TooFewCorrespondences { .. }) => fail(3, e.to_string()),
        _ => fail(1, e.to_string()),
    })?;
    Ok((query, map, result))
}

fn cmd_match(args: MatchArgs, config: &RunConfig) -> Result<(), CliError> {
    let (query, map, result) = run_match(&args.map, &args.query, args.metric.resolve(), config)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| fail(1, format!("cannot create {}: {e}", args.out.display())))?;
    write_artifacts(
        &args.out,
        &[
            ("matches.csv", io::matches_csv(&result)),
            ("pose.json", io::pose_json(&result)),
        ],
    )?;
    println!(
        "matched {} fruits ({} inliers, mean residual {:.6} m)",
        result.correspondences.len(),
        result.inlier_pairs.len(),
        result.stats.mean_residual
    );
    if let Some(gt_path) = &args.ground_truth {
        let truth = io::read_ground_truth(gt_path).map_err(|m| fail(1, m))?;
        let report = evaluate(&result, &truth, &query, &map, map.params().min_frames);
        let json = serde_json::to_string(&report).expect("report serializes");
        println!("{json}");
    }
    Ok(())
}

fn cmd_localize(args: LocalizeArgs, config: &RunConfig) -> Result<(), CliError> {
    let (_, _, result) = run_match(&args.map, &args.query, args.metric.resolve(), config)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| fail(1, format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(&args.out, io::pose_json(&result))
        .map_err(|e| fail(1, format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "localized with {} inliers; pose written to {}",
        result.inlier_pairs.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_synth_orchard(args: OrchardArgs, config: &RunConfig) -> Result<(), CliError> {
    let mut spec = OrchardSpec {
        seed: config.matching.seed,
        ..OrchardSpec::default()
    };
    if let Some(trees) = args.trees {
        spec.trees = trees;
    }
    if let Some(mean) = args.fruits_mean {
        spec.fruits_per_tree_mean = mean;
    }
    if let Some(spread) = args.fruits_spread {
        spec.fruits_per_tree_spread = spread;
    }
    let cloud = gen_orchard(&spec).map_err(|e| fail(1, e.to_string()))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| fail(1, format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(&args.out, io::cloud_csv(&cloud))
        .map_err(|e| fail(1, format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "wrote {} fruits ({} trees, seed {}) to {}",
        cloud.len(),
        spec.trees,
        spec.seed,
        args.out.display()
    );
    Ok(())
}

/// Writes named artifacts into a directory; on any write failure the files
/// already written by this call are removed again.
fn write_artifacts(out_dir: &Path, files: &[(&str, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| fail(1, format!("cannot create {}: {e}", out_dir.display())))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (name, content) in files {
        let path = out_dir.join(name);
        if let Err(e) = std::fs::write(&path, content) {
            for earlier in &written {
                let _ = std::fs::remove_file(earlier);
            }
            return Err(fail(1, format!("cannot write {}: {e}", path.display())));
        }
        written.push(path);
    }
    Ok(())
}

fn default_or_input_cloud(
    input: &Option<PathBuf>,
    metric: Option<bool>,
    seed: u64,
) -> Result<PointCloud, CliError> {
    match input {
        Some(path) => io::read_cloud(path, metric).map_err(|m| fail(1, m)),
        None => gen_orchard(&OrchardSpec {
            seed,
            ..OrchardSpec::default()
        })
        .map_err(|e| fail(1, e.to_string())),
    }
}

fn pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("benchmark results serialize");
    text.push('\n');
    text
}

fn cmd_bench_robustness(args: RobustnessArgs, config: &RunConfig) -> Result<(), CliError> {
    let occlusion = parse_grid(&args.occlusion).map_err(|m| fail(1, format!("--occlusion: {m}")))?;
    let noise = parse_grid(&args.noise).map_err(|m| fail(1, format!("--noise: {m}")))?;
    let cloud = default_or_input_cloud(&args.input, args.metric.resolve(), config.matching.seed)?;
    let rows = occlusion_noise_experiment(
        &cloud,
        &occlusion,
        &noise,
        args.repeats,
        &config.enumeration,
        &config.matching,
        config.matching.seed,
    )
    .map_err(|e| fail(1, e.to_string()))?;
    write_artifacts(
        &args.out,
        &[
            ("robustness.csv", robustness_csv(&rows)),
            ("robustness.json", pretty_json(&rows)),
        ],
    )?;
    println!(
        "wrote {} robustness rows ({} cells × {} repeats) to {}",
        rows.len(),
        occlusion.len() * noise.len(),
        args.repeats,
        args.out.display()
    );
    Ok(())
}

/// A seeded random rigid motion used to displace the query copy in the
/// matching benchmark.
fn random_rigid(seed: u64) -> SimilarityTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm() > 1e-3 {
            break v.normalized().expect("nonzero axis");
        }
    };
    let rotation = rotation_about_axis(axis, rng.gen_range(0.0..std::f64::consts::PI));
    let translation = Vec3::new(
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
    );
    SimilarityTransform::new(rotation, translation, 1.0).expect("rigid motion is valid")
}

fn cmd_bench_matching(args: MatchingArgs, config: &RunConfig) -> Result<(), CliError> {
    let seed = config.matching.seed;
    let base = OrchardSpec {
        seed,
        ..OrchardSpec::default()
    };
    let perturbation = PerturbSpec {
        occlusion_fraction: args.occlusion,
        noise_std: args.noise,
        transform: Some(random_rigid(seed ^ 0x5EED_CAFE)),
        seed: seed ^ 0xA5A5_5A5A,
    };
    let summary = matching_experiment(
        &base,
        &perturbation,
        &config.enumeration,
        &config.matching,
        args.repeats,
    )
    .map_err(|e| fail(1, e.to_string()))?;
    let mut csv = String::from(
        "run,true_positives,false_positives,false_negatives,precision,recall\n",
    );
    for (run, report) in summary.runs.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            run,
            report.true_positives,
            report.false_positives,
            report.false_negatives,
            full_precision(report.precision),
            full_precision(report.recall),
        ));
    }
    write_artifacts(
        &args.out,
        &[("matching.csv", csv), ("matching.json", pretty_json(&summary))],
    )?;
    println!(
        "matching over {} runs: mean precision {:.4}, mean recall {:.4}, {} failures",
        summary.runs.len(),
        summary.mean_precision,
        summary.mean_recall,
        summary.failures
    );
    Ok(())
}

fn cmd_bench_trajectory(args: TrajectoryArgs, config: &RunConfig) -> Result<(), CliError> {
    let seed = config.matching.seed;
    let orchard = default_or_input_cloud(&args.input, args.metric.resolve(), seed)?;
    if args.frames == 0 {
        return Err(fail(1, "--frames must be at least 1".to_string()));
    }
    let xs: Vec<f64> = orchard.points().iter().map(|p| p.position.x).collect();
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let path = TrajectorySpec::linear_path(args.frames, x_min, x_max, args.noise, seed);
    let result = trajectory_experiment(&orchard, &path, &config.enumeration, &config.matching)
        .map_err(|e| fail(1, e.to_string()))?;
    write_artifacts(
        &args.out,
        &[
            ("trajectory.csv", trajectory_csv(&result)),
            ("trajectory.json", pretty_json(&result)),
        ],
    )?;
    println!(
        "trajectory: {}/{} frames localized, translation RMSE {:.6} m, rotation RMSE {:.6} rad",
        result.localized_frames,
        result.frames.len(),
        result.translation_rmse,
        result.rotation_rmse
    );
    Ok(())
}
