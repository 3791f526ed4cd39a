use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mbnav_core::env::{ConfigError, EnvConfig};
use mbnav_core::episodic::ErrorCategory;
use mbnav_core::policy::{LinearPolicy, Policy, PolicyError, ZeroPolicy};
use mbnav_core::trainer::{
    ars_train, evaluate, evaluate_recorded, wind_sweep, ArsConfig, TrainError, TrainReport,
};
use mbnav_core::trajectory::{export_trajectories, import_trajectories, replay, TrajectoryError};
use mbnav_core::variation::{self, VariationError, VariationParams};

#[derive(Parser)]
#[command(name = "mbnav", version, about = "Multi-robot navigation environment and ARS trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment config.
    Gen(GenArgs),
    /// Train a linear policy with ARS.
    Train(TrainArgs),
    /// Evaluate a policy and optionally record trajectories.
    Eval(EvalArgs),
    /// Evaluate a policy under constant wind at several speeds.
    Sweep(SweepArgs),
    /// Re-run recorded trajectories and check them bit for bit.
    Replay(ReplayArgs),
    /// Turn a training log into a learning-curve CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 33)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    robots: usize,
    #[arg(long, default_value_t = 6)]
    rois: usize,
    #[arg(long, default_value_t = 1000.0)]
    bound: f64,
    /// Fixed vertex count for the field polygon.
    #[arg(long)]
    vertices: Option<usize>,
    /// Use a fixed environment instead: 1..=10, `toy` or `small-team`.
    #[arg(long, conflicts_with_all = ["seed", "robots", "rois", "bound", "vertices"])]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    env: PathBuf,
    /// JSON ARS settings; missing fields take their defaults.
    #[arg(long)]
    ars_config: Option<PathBuf>,
    /// Override the iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Override the trainer seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_policy: PathBuf,
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    env: PathBuf,
    /// Policy file; the zero policy is used when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write every episode to this trajectory file.
    #[arg(long)]
    out_traj: Option<PathBuf>,
    /// Write the statistics here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Comma-separated wind speeds; defaults to fractions of v_clip.
    #[arg(long, value_delimiter = ',')]
    speeds: Option<Vec<f64>>,
    /// Wind direction in degrees.
    #[arg(long, default_value_t = 30.0)]
    angle: f64,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    env: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    train_report: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct Failure {
    category: ErrorCategory,
    message: String,
}

impl Failure {
    fn new(category: ErrorCategory, message: impl Display) -> Self {
        Self {
            category,
            message: message.to_string(),
        }
    }

    fn config(message: impl Display) -> Self {
        Self::new(ErrorCategory::Config, message)
    }

    fn runtime(message: impl Display) -> Self {
        Self::new(ErrorCategory::Runtime, message)
    }

    fn with_prefix(mut self, prefix: impl Display) -> Self {
        self.message = format!("{prefix}: {}", self.message);
        self
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::config(e)
    }
}

impl From<VariationError> for Failure {
    fn from(e: VariationError) -> Self {
        match e {
            VariationError::GenerationFailed(_) => Self::runtime(e),
            _ => Self::config(e),
        }
    }
}

impl From<PolicyError> for Failure {
    fn from(e: PolicyError) -> Self {
        Self::config(e)
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::Config(_) => Self::config(e),
            TrainError::Env(_) | TrainError::Policy(_) => Self::runtime(e),
        }
    }
}

impl From<TrajectoryError> for Failure {
    fn from(e: TrajectoryError) -> Self {
        let category = match e {
            TrajectoryError::ReplayMismatch { .. }
            | TrajectoryError::ConfigMismatch { .. }
            | TrajectoryError::Env { .. } => ErrorCategory::ReplayMismatch,
            TrajectoryError::Io(_) | TrajectoryError::Parse { .. } | TrajectoryError::Version(_) => {
                ErrorCategory::Config
            }
            TrajectoryError::Csv(_) => ErrorCategory::Runtime,
        };
        Self::new(category, e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_policy(path: Option<&Path>, cfg: &EnvConfig) -> CliResult<Box<dyn Policy>> {
    match path {
        None => Ok(Box::new(ZeroPolicy {
            n_robots: cfg.n_robots(),
        })),
        Some(path) => {
            let policy = LinearPolicy::load(path, cfg.n_robots())?;
            policy.check_config(cfg)?;
            Ok(Box::new(policy))
        }
    }
}

fn cmd_gen(args: GenArgs) -> CliResult<()> {
    let cfg = match args.preset.as_deref() {
        Some("toy") => variation::toy_env(),
        Some("small-team") => variation::small_team_env(),
        Some(id) => {
            let id: u32 = id
                .parse()
                .map_err(|_| Failure::config(format!("unknown preset {id:?}")))?;
            variation::preset(id)?
        }
        None => variation::generate(&VariationParams {
            seed: args.seed,
            n_robots: args.robots,
            n_rois: args.rois,
            bound: args.bound,
            vertices: args.vertices,
        })?,
    };
    cfg.save(&args.out)?;
    log::info!("wrote {} ({})", args.out.display(), cfg.content_hash());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let cfg = EnvConfig::load(&args.env)?;
    let mut ars = match &args.ars_config {
        Some(path) => serde_json::from_str::<ArsConfig>(&read_file(path)?)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?,
        None => ArsConfig::default(),
    };
    if let Some(n) = args.iterations {
        ars.n_iterations = n;
    }
    if let Some(seed) = args.seed {
        ars.seed = seed;
    }
    let (policy, mut report) = ars_train(&cfg, &ars)?;
    policy.save(&args.out_policy)?;
    report.summary.policy_path = Some(args.out_policy.display().to_string());
    write_file(&args.out_report, &report.to_jsonl())?;
    println!("{}", serde_json::to_string(&report.summary).expect("summary serializes"));
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let cfg = EnvConfig::load(&args.env)?;
    let policy = load_policy(args.policy.as_deref(), &cfg)?;
    let stats = match &args.out_traj {
        Some(path) => {
            let (stats, trajectories) =
                evaluate_recorded(policy.as_ref(), &cfg, args.episodes, args.seed)?;
            export_trajectories(&trajectories, path)?;
            stats
        }
        None => evaluate(policy.as_ref(), &cfg, args.episodes, args.seed)?,
    };
    emit(args.out.as_deref(), &to_json(&stats))
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let cfg = EnvConfig::load(&args.env)?;
    let policy = load_policy(args.policy.as_deref(), &cfg)?;
    let speeds = args.speeds.unwrap_or_else(|| {
        [0.0, 50.0, 20.0, 10.0, 5.0, 2.0, 1.0]
            .iter()
            .map(|d| if *d == 0.0 { 0.0 } else { cfg.v_clip / d })
            .collect()
    });
    if let Some(bad) = speeds.iter().find(|s| !s.is_finite()) {
        return Err(Failure::config(format!("wind speed {bad} is not finite")));
    }
    let report = wind_sweep(
        policy.as_ref(),
        &cfg,
        &speeds,
        args.angle.to_radians(),
        args.episodes,
        args.seed,
    )?;
    emit(args.out.as_deref(), &to_json(&report))
}

#[derive(Serialize)]
struct ReplaySummary {
    episodes: usize,
    steps: usize,
}

fn cmd_replay(args: ReplayArgs) -> CliResult<()> {
    let cfg = Arc::new(EnvConfig::load(&args.env)?);
    let trajectories = import_trajectories(&args.traj)?;
    let mut steps = 0;
    for (i, traj) in trajectories.iter().enumerate() {
        let report = replay(traj, &cfg)
            .map_err(|e| Failure::from(e).with_prefix(format!("episode {i}")))?;
        steps += report.steps;
    }
    println!(
        "{}",
        serde_json::to_string(&ReplaySummary {
            episodes: trajectories.len(),
            steps,
        })
        .expect("summary serializes")
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> CliResult<()> {
    let text = read_file(&args.train_report)?;
    let report = TrainReport::from_jsonl(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", args.train_report.display())))?;
    write_file(&args.out, &report.learning_curve_csv())
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("MBNAV_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::config(format!("MBNAV_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(Failure::runtime)
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorCategory,
    message: &'a str,
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(ErrorCategory::Config.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let report = ErrorReport {
                error: f.category,
                message: &f.message,
            };
            eprintln!("{}", serde_json::to_string(&report).expect("error serializes"));
            ExitCode::from(f.category.exit_code() as u8)
        }
    }
}
