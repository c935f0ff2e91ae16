use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;

/// Manifold regularization toolkit: two-circle datasets, deformed-kernel
/// complexity curves, elbow selection, training, evaluation, kernel slices,
/// and sample-size calculators.
#[derive(Debug, Parser, Serialize)]
#[command(name = "mrrad", version)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output path (stdout when omitted).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    /// Suppress the config echo and warnings on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
enum Command {
    /// Generate a two-circle dataset CSV with a few labels kept.
    Gen(GenArgs),
    /// Sweep mu and write the complexity curve as mu,upper,lower,selected.
    Curve(CurveArgs),
    /// Pick the elbow of a curve CSV.
    Select(SelectArgs),
    /// Train a model and write it as JSON.
    Train(TrainArgs),
    /// Score a model on a labeled CSV.
    Eval(EvalArgs),
    /// Evaluate the deformed kernel around one point on a grid (gx,gy,value).
    Slice(SliceArgs),
    /// Labeled and unlabeled sample sizes from the closed-form bounds.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    /// Points per circle.
    #[arg(long, default_value_t = 250)]
    n_per_circle: usize,
    /// Inner circle radius (label +1).
    #[arg(long, default_value_t = 1.0)]
    r1: f64,
    /// Outer circle radius (label -1).
    #[arg(long, default_value_t = 2.0)]
    r2: f64,
    /// Standard deviation of the radial noise.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Labels to keep; the rest of the points are written unlabeled.
    #[arg(long, default_value_t = 2)]
    labels: usize,
}

#[derive(Debug, Args, Serialize)]
struct KernelArgs {
    /// Base kernel bandwidth h in exp(-d²/(2h²)).
    #[arg(long, default_value_t = 0.5)]
    bandwidth: f64,
    /// Base kernel divisor sigma in exp(-d²/sigma); overrides --bandwidth.
    #[arg(long)]
    sigma: Option<f64>,
    /// Graph weight bandwidth h in exp(-d²/(2h²)).
    #[arg(long, default_value_t = 0.2)]
    graph_bandwidth: f64,
    /// Graph weight divisor in exp(-d²/sigma_w); overrides --graph-bandwidth.
    #[arg(long)]
    sigma_w: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Axis {
    Linear,
    Log10,
}

#[derive(Debug, Args, Serialize)]
struct CurveArgs {
    /// Dataset CSV; its labeled rows are the points the bound is taken over.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// RKHS ball radius r.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Smallest mu of the log-spaced grid.
    #[arg(long, default_value_t = 1e-3)]
    mu_min: f64,
    /// Largest mu of the log-spaced grid.
    #[arg(long, default_value_t = 1.0)]
    mu_max: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 25)]
    mu_count: usize,
    /// Explicit comma-separated increasing grid; overrides the log grid.
    #[arg(long, value_delimiter = ',')]
    mu_grid: Option<Vec<f64>>,
    /// Horizontal coordinate for the elbow chord.
    #[arg(long, value_enum, default_value_t = Axis::Linear)]
    elbow_axis: Axis,
}

#[derive(Debug, Args, Serialize)]
struct SelectArgs {
    /// Curve CSV written by `curve`.
    #[arg(long)]
    curve: PathBuf,
    /// Horizontal coordinate for the elbow chord.
    #[arg(long, value_enum, default_value_t = Axis::Linear)]
    elbow_axis: Axis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Supervised,
    Joint,
    Deformed,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Training CSV (labeled rows first).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Joint)]
    method: MethodArg,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Ambient ridge weight.
    #[arg(long, default_value_t = 1e-4)]
    lambda_a: f64,
    /// Graph penalty weight.
    #[arg(long, default_value_t = 0.2)]
    mu: f64,
    /// Penalty budget; when set, mu is found by bisection (joint method only).
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Labeled CSV to score on.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SliceArgs {
    /// Dataset CSV; all its points define the graph.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Deformation weight mu.
    #[arg(long, default_value_t = 0.2)]
    mu: f64,
    /// Row of the dataset used as the reference point.
    #[arg(long, default_value_t = 0)]
    ref_index: usize,
    /// Grid points per axis.
    #[arg(long, default_value_t = 60)]
    grid: usize,
    /// Padding around the data's bounding box.
    #[arg(long, default_value_t = 0.25)]
    margin: f64,
}

#[derive(Debug, Args, Serialize)]
struct BoundsArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    /// Bound on the unsupervised loss.
    #[arg(long, default_value_t = 1.0)]
    b1: f64,
    /// Bound on the supervised loss.
    #[arg(long, default_value_t = 1.0)]
    b2: f64,
    #[arg(long, default_value_t = 10)]
    pdim_psi: u64,
    #[arg(long, default_value_t = 10)]
    pdim_phi: u64,
    /// Capacity term of the labeled side condition (defaults to --pdim-phi).
    #[arg(long)]
    h: Option<u64>,
    /// Unsupervised-loss budget, reported only.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    theorem: u8,
    /// Hidden constant of the fast-rate labeled bound; required with --theorem 3.
    #[arg(long)]
    big_o_constant: Option<f64>,
    /// Report the unlabeled size in points instead of pairs.
    #[arg(long)]
    pairs_mode: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let body = serde_json::json!({"error": {"kind": "usage", "message": msg.trim()}});
            eprintln!("{body}");
            return ExitCode::FAILURE;
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
