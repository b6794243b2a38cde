//! `odom`: batch front end for the odom-core pipeline.
//!
//! Exit codes: 0 on success, 1 on input errors (bad flags, unreadable or
//! malformed files), 2 on estimation failures.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "odom", version, about = "Monocular visual odometry from matched image points")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: match file, ground truth and config.
    Synth(SynthArgs),
    /// Estimate one relative pose per frame pair.
    Estimate(EstimateArgs),
    /// Chain pair estimates into a trajectory, optionally applying residuals.
    Compose(ComposeArgs),
    /// Estimate and compose in one step.
    Run(RunArgs),
    /// Score a trajectory against ground truth.
    Eval(EvalArgs),
    /// Mirror or rotation-warp a match file and its relative poses.
    Augment(AugmentArgs),
    /// Check the loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    frames: usize,
    /// Output directory; receives matches.csv, groundtruth.txt and config.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Pixel noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Fraction of planted outliers per pair.
    #[arg(long, default_value_t = 0.0)]
    outliers: f64,
    /// Vehicle speed in m/s.
    #[arg(long, default_value_t = 10.0)]
    speed: f64,
    /// Seconds between frames.
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
    /// Largest yaw rate in rad/s.
    #[arg(long, default_value_t = 0.1)]
    max_yaw_rate: f64,
    /// Comma-separated pair indices that span a 30 s signal gap.
    #[arg(long, value_delimiter = ',')]
    gap_pairs: Vec<usize>,
    /// Camera and estimator settings to embed; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EstimationOptions {
    /// Configuration file; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured RANSAC seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Extra static regions, `u_min v_min u_max v_max` separated by `;`.
    #[arg(long)]
    static_mask: Option<String>,
    /// Take each pair's translation magnitude from this ground-truth
    /// trajectory instead of the constant heuristic.
    #[arg(long)]
    scale_from: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    matches: PathBuf,
    /// Pair estimates output file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    options: EstimationOptions,
}

#[derive(Args)]
struct ResidualOptions {
    /// Per-pair residual updates applied before composition.
    #[arg(long)]
    residuals: Option<PathBuf>,
    /// Replace the real part of each rotation sum by exp(w_prelim).
    #[arg(long, requires = "residuals")]
    positive_w: bool,
}

#[derive(Args)]
struct ComposeArgs {
    #[arg(long)]
    estimates: PathBuf,
    /// Trajectory output file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    residual: ResidualOptions,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    matches: PathBuf,
    /// Trajectory output file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the pair estimates here.
    #[arg(long)]
    estimates_out: Option<PathBuf>,
    #[command(flatten)]
    options: EstimationOptions,
    #[command(flatten)]
    residual: ResidualOptions,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    groundtruth: PathBuf,
    /// Write the text report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-frame errors as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    matches: PathBuf,
    /// Camera; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Relative pose of every pair, `tx ty tz qx qy qz qw`.
    #[arg(long, conflicts_with = "groundtruth", allow_hyphen_values = true)]
    pose: Option<String>,
    /// Ground-truth trajectory supplying each pair's relative pose.
    #[arg(long)]
    groundtruth: Option<PathBuf>,
    /// Mirror both frames left to right.
    #[arg(long, conflicts_with_all = ["warp_axis", "warp_deg"])]
    mirror: bool,
    /// Warp rotation axis, `x y z` in camera coordinates.
    #[arg(long, requires = "warp_deg", allow_hyphen_values = true)]
    warp_axis: Option<String>,
    /// Warp rotation angle in degrees.
    #[arg(long, requires = "warp_axis", allow_hyphen_values = true)]
    warp_deg: Option<f64>,
    /// Largest allowed warp angle in degrees.
    #[arg(long, default_value_t = 3.0)]
    max_warp_deg: f64,
    /// Augmented match file.
    #[arg(long)]
    out: PathBuf,
    /// Adjusted relative poses.
    #[arg(long)]
    pose_out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Compose(a) => commands::compose(a),
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
        Command::Augment(a) => commands::augment(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
