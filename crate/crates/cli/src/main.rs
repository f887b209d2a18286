use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use conemap_core::eval::{evaluate_map, planning_stats, EvalReport, IcpConfig, PlanningSample};
use conemap_core::io::{self, SnapshotRecord, PLANNER_SCHEMA, SNAPSHOT_SCHEMA};
use conemap_core::pipeline::{self, files, ClosedLoopConfig, RunConfig, PRESETS};
use conemap_core::sim::{generate_track, ModeSchedule, SensorProfile, TrackSpec};
use conemap_core::{Error, MapCone, PlannerOutput, Pose2, TrackDefinition};

#[derive(Parser)]
#[command(name = "conemap", version, about = "Cone mapping and path planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a track and write it as JSON.
    Generate(GenerateArgs),
    /// Simulate one lap and write every artifact to a run directory.
    Run(RunArgs),
    /// Re-run planner and global map on a recorded snapshot log.
    Replay(ReplayArgs),
    /// Score a map and a planner log against a track.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Track spec JSON; defaults to the FSG-like layout.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or config JSON; missing fields take preset defaults.
    #[arg(long, default_value = "fsg-like-12ms")]
    config: String,
    /// Simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    track_seed: Option<u64>,
    /// Use this track file instead of generating one.
    #[arg(long)]
    track: Option<PathBuf>,
    /// Sensors: fusion, lidar, camera, degraded, or a JSON file with one profile or a list.
    #[arg(long)]
    profile: Option<String>,
    /// JSON list of {time_s, pipeline, alive} events.
    #[arg(long)]
    mode_schedule: Option<PathBuf>,
    /// Steer along the planned path instead of the true centerline.
    #[arg(long)]
    closed_loop: bool,
    /// Log every candidate's score, not just the selected one.
    #[arg(long)]
    verbose_candidates: bool,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Snapshot log (snapshots.ndjson of a run).
    log: PathBuf,
    /// Preset or config JSON for planner and global map; defaults to the
    /// config.json next to the log, else the default preset.
    #[arg(long)]
    config: Option<String>,
    /// Override the prior weight.
    #[arg(long)]
    w_prior: Option<f64>,
    /// Planner log to compare path selections against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Track for the evaluation report; defaults to track.json next to the log.
    #[arg(long)]
    track: Option<PathBuf>,
    #[arg(long)]
    verbose_candidates: bool,
    #[arg(long, default_value = "replay")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    track: PathBuf,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    dead_reckoned_map: Option<PathBuf>,
    #[arg(long)]
    planner_log: Option<PathBuf>,
    /// Preset or config JSON supplying ICP settings.
    #[arg(long)]
    config: Option<String>,
    /// Directory for report files; the report goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status plus the reason for it.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

fn run_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

/// Bad inputs are config errors; anything else failed while running.
fn classify(e: Error) -> Failure {
    match e {
        Error::InvalidConfig(_) | Error::InfeasibleTrack(_) | Error::SchemaMismatch(_) => config_error(e),
        e => run_failure(e),
    }
}

fn load_config(name: &str) -> Result<RunConfig, Failure> {
    if let Some(c) = RunConfig::preset(name) {
        return Ok(c);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(config_error(anyhow!(
            "{name} is neither a preset ({}) nor an existing file",
            PRESETS.join(", ")
        )));
    }
    io::read_json(path)
        .with_context(|| format!("reading config {name}"))
        .map_err(config_error)
}

fn load_profiles(arg: &str) -> Result<Vec<SensorProfile>, Failure> {
    Ok(match arg {
        "fusion" => vec![SensorProfile::fusion()],
        "lidar" => vec![SensorProfile::lidar_only()],
        "camera" => vec![SensorProfile::camera_only()],
        "degraded" => vec![SensorProfile::lidar_only(), SensorProfile::camera_only()],
        path => {
            let value: serde_json::Value = io::read_json(Path::new(path))
                .with_context(|| format!("reading sensor profile {path}"))
                .map_err(config_error)?;
            let parsed = if value.is_array() {
                serde_json::from_value(value)
            } else {
                serde_json::from_value(value).map(|p| vec![p])
            };
            parsed.with_context(|| format!("parsing sensor profile {path}")).map_err(config_error)?
        }
    })
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let spec = match &args.spec {
        Some(p) => io::read_json(p).with_context(|| format!("reading spec {}", p.display())).map_err(config_error)?,
        None => TrackSpec::fsg_like(),
    };
    let track = generate_track(&spec, args.seed).map_err(classify)?;
    io::write_json(&args.out, &track).map_err(run_failure)?;
    println!(
        "{}: {} cones, {:.1} m",
        args.out.display(),
        track.cones.len(),
        track.total_length
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.config)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(s) = args.track_seed {
        config.track_seed = s;
    }
    if let Some(t) = args.track {
        config.track_file = Some(t);
    }
    if let Some(p) = &args.profile {
        config.sensor_profiles = load_profiles(p)?;
    }
    if let Some(p) = &args.mode_schedule {
        let schedule: ModeSchedule = io::read_json(p)
            .with_context(|| format!("reading mode schedule {}", p.display()))
            .map_err(config_error)?;
        config.mode_schedule = schedule;
    }
    if args.closed_loop && config.closed_loop.is_none() {
        config.closed_loop = Some(ClosedLoopConfig::default());
    }
    config.verbose_candidates |= args.verbose_candidates;
    config.validate().map_err(classify)?;

    let outputs = pipeline::run(&config).map_err(classify)?;
    outputs.write(&args.out).map_err(run_failure)?;

    let r = &outputs.report;
    let rmse = |m: &Option<conemap_core::eval::MapMetrics>| m.as_ref().map_or("n/a".into(), |m| format!("{:.3} m", m.rmse_m));
    println!("frames: {}", outputs.status.frames);
    println!("landmarks: {}", outputs.backend.map.len());
    println!("map rmse: {}", rmse(&r.map));
    println!("dead-reckoned rmse: {}", rmse(&r.dead_reckoned_map));
    println!("max-length paths: {:.3}", r.planning.max_bin_fraction());
    println!("out of track within 5 m: {:.4}", r.planning.out_of_track_within(5));
    if outputs.status.completed_lap {
        Ok(())
    } else {
        Err(run_failure(anyhow!(
            "lap not completed: {}",
            outputs.status.failure.as_deref().unwrap_or("unknown")
        )))
    }
}

fn replay(args: ReplayArgs) -> Result<(), Failure> {
    let dir = args.log.parent().unwrap_or(Path::new("."));
    let mut config = match &args.config {
        Some(c) => load_config(c)?,
        None if dir.join(files::CONFIG).exists() => load_config(&dir.join(files::CONFIG).to_string_lossy())?,
        None => RunConfig::default(),
    };
    if let Some(w) = args.w_prior {
        config.planner.prior.w_prior = w;
    }
    config.planner.validate().map_err(classify)?;
    let track = match args.track.or_else(|| Some(dir.join(files::TRACK)).filter(|p| p.exists())) {
        Some(p) => Some(
            io::read_json::<TrackDefinition>(&p)
                .with_context(|| format!("reading track {}", p.display()))
                .map_err(config_error)?,
        ),
        None => None,
    };
    let baseline = match &args.baseline {
        Some(p) => Some(
            io::read_ndjson_file::<PlannerOutput>(p, PLANNER_SCHEMA)
                .map_err(classify)?
                .records,
        ),
        None => None,
    };

    let log = io::read_ndjson_file::<SnapshotRecord>(&args.log, SNAPSHOT_SCHEMA).map_err(classify)?;
    let verbose = args.verbose_candidates || config.verbose_candidates;
    let outputs =
        pipeline::replay(&log.records, &config.planner, &config.global_map, verbose).map_err(run_failure)?;
    let report = track.as_ref().map(|t| pipeline::evaluate(&outputs, t, &config.icp));
    pipeline::write_backend_outputs(&args.out, &outputs, report.as_ref()).map_err(run_failure)?;
    println!("snapshots: {}", log.records.len());
    if let Some(base) = baseline {
        let diffs = pipeline::compare_planner_logs(&base, &outputs.planner_log);
        io::write_json(&args.out.join(files::SELECTION_DIFFS), &diffs).map_err(run_failure)?;
        println!("differing selections: {}", diffs.len());
    }
    match log.truncated_at {
        Some(line) => Err(run_failure(anyhow!(
            "snapshot log truncated at line {line}; wrote outputs for {} snapshots",
            log.records.len()
        ))),
        None => Ok(()),
    }
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let icp = match &args.config {
        Some(c) => load_config(c)?.icp,
        None => IcpConfig::default(),
    };
    let read = |p: &Path, what: &str| -> Result<_, Failure> {
        io::read_json::<Vec<MapCone>>(p)
            .with_context(|| format!("reading {what} {}", p.display()))
            .map_err(config_error)
    };
    let track: TrackDefinition = io::read_json(&args.track)
        .with_context(|| format!("reading track {}", args.track.display()))
        .map_err(config_error)?;
    let planner_log = match &args.planner_log {
        Some(p) => io::read_ndjson_file::<PlannerOutput>(p, PLANNER_SCHEMA).map_err(classify)?.records,
        None => Vec::new(),
    };
    // Both the map and the ego poses live in the frame of the first ego pose.
    let init = planner_log
        .iter()
        .find_map(|o| o.true_pose.map(|t| t.compose(&o.ego.inverse())))
        .unwrap_or(Pose2::IDENTITY);
    let metrics = |p: &Option<PathBuf>, what: &str| -> Result<_, Failure> {
        match p {
            Some(p) => {
                let map = read(p, what)?;
                Ok(Some(evaluate_map(&map, &track, &init, &icp).map_err(run_failure)?))
            }
            None => Ok(None),
        }
    };
    let samples: Vec<PlanningSample> = planner_log
        .iter()
        .filter_map(|o| o.true_pose.map(|t| PlanningSample { output: o, true_pose: t }))
        .collect();
    let report = EvalReport {
        map: metrics(&args.map, "map")?,
        dead_reckoned_map: metrics(&args.dead_reckoned_map, "dead-reckoned map")?,
        planning: planning_stats(&samples, &track),
    };
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(run_failure)?;
            pipeline::write_report(dir, &report).map_err(run_failure)?;
            print!("{}", report.summary_csv());
        }
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(run_failure)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Replay(a) => replay(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
