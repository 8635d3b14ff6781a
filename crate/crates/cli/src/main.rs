use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use map_eval::metrics::DimensionMode;
use map_eval::registration::RegistrationMode;

mod commands;

/// Target-based accuracy evaluation of LiDAR SLAM pointcloud maps.
#[derive(Debug, Parser)]
#[command(name = "map-eval", version)]
struct Cli {
    /// Worker threads for per-target sampling (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crop, estimate, register and score every target of a map.
    Evaluate(EvaluateArgs),
    /// Estimate one target from a tightly cropped cloud.
    EstimateTarget(EstimateArgs),
    /// Cut tight per-target clouds out of a map.
    Crop(CropArgs),
    /// Align estimated target positions with ground truth.
    Register(RegisterArgs),
    /// Generate a synthetic map, ground truth and point labels.
    Synth(SynthArgs),
}

/// Options shared by commands that read a run config.
#[derive(Debug, Args)]
struct RunArgs {
    /// Flat JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Map PCD; overrides `map_path`.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Ground-truth CSV; overrides `gps_path`.
    #[arg(long)]
    gps: Option<PathBuf>,
    /// Directory of `<target_id>.pcd` tight crops; replaces the map input.
    #[arg(long)]
    pre_cropped: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    registration_mode: Option<RegistrationMode>,
    #[arg(long, value_parser = parse_dim)]
    dim: Option<DimensionMode>,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write relative.csv and absolute.csv here.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
    /// Row label for the CSV tables.
    #[arg(long, default_value = "sequence")]
    sequence: String,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Tight PCD of one target.
    cloud: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Id written to the output (default: file stem).
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CropArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    gps: Option<PathBuf>,
    /// Receives `<target_id>.pcd` per target.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    /// Estimated positions, same CSV layout as ground truth.
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long)]
    gps: PathBuf,
    #[arg(long, value_parser = parse_mode, default_value = "least-squares")]
    registration_mode: RegistrationMode,
    #[arg(long, value_parser = parse_dim, default_value = "2d")]
    dim: DimensionMode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene spec JSON. Without one, five targets on a 15 m × 10 m ellipse.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Receives map.pcd, truth.csv and labels.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Write the map as ASCII instead of binary.
    #[arg(long)]
    ascii: bool,
}

fn parse_mode(s: &str) -> Result<RegistrationMode, String> {
    s.parse()
}

fn parse_dim(s: &str) -> Result<DimensionMode, String> {
    s.parse()
}

/// Why a command failed; selects the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad input or configuration, nothing evaluated.
    Input(String),
    /// Estimation or evaluation failed for at least one target.
    Estimation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Estimation(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Evaluate(a) => commands::evaluate(a),
        Command::EstimateTarget(a) => commands::estimate_target(a),
        Command::Crop(a) => commands::crop(a),
        Command::Register(a) => commands::register(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(m) | Failure::Estimation(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
