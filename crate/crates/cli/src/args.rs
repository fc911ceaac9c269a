use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flm_core::fields::{Grid2D, TaskKind};
use flm_core::synth::Range;

#[derive(Debug, Parser)]
#[command(name = "flm", version, about = "Fit, probe and evaluate sparse functional linear models")]
pub struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// JSON object of flag values; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Darcy-flow dataset.
    GenData(GenDataArgs),
    /// Fit a model to a dataset.
    Fit(FitArgs),
    /// Build a dataset by querying a predictor.
    Probe(ProbeArgs),
    /// Predict outputs for the inputs of a dataset.
    Predict(PredictArgs),
    /// Report error metrics of a model on one or more datasets.
    Eval(EvalArgs),
    /// Render a model as an equation or re-emit its JSON.
    Export(ExportArgs),
}

pub fn parse_task(s: &str) -> Result<TaskKind, String> {
    TaskKind::parse(s).ok_or_else(|| format!("unknown task `{s}` (scalar, line or image)"))
}

/// `28` or `28x32`.
pub fn parse_grid(s: &str) -> Result<Grid2D, String> {
    let (nx, ny) = match s.split_once('x') {
        Some((a, b)) => (a, b),
        None => (s, s),
    };
    let nx = nx.trim().parse().map_err(|_| format!("bad grid `{s}`"))?;
    let ny = ny.trim().parse().map_err(|_| format!("bad grid `{s}`"))?;
    Grid2D::new(nx, ny).map_err(|e| e.to_string())
}

/// `lo,hi` or a single fixed value.
pub fn parse_range(s: &str) -> Result<Range, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad range `{s}`"));
    match s.split_once(',') {
        Some((a, b)) => Ok(Range::new(num(a)?, num(b)?)),
        None => Ok(Range::fixed(num(s)?)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Smooth,
    Case2,
    Case3,
    Constant,
}

#[derive(Debug, Args)]
pub struct SamplerArgs {
    /// Input family.
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Full sampler as JSON, e.g. `{"family":"case3","a":{"min":1,"max":2},...}`.
    #[arg(long, conflicts_with = "family")]
    pub sampler: Option<String>,
    #[arg(long, value_parser = parse_range)]
    pub a: Option<Range>,
    #[arg(long, value_parser = parse_range)]
    pub b: Option<Range>,
    #[arg(long, value_parser = parse_range)]
    pub y: Option<Range>,
    #[arg(long, value_parser = parse_range)]
    pub r: Option<Range>,
    /// Value of the constant family.
    #[arg(long)]
    pub value: Option<f64>,
    #[arg(long, default_value_t = 6)]
    pub max_modes: usize,
    #[arg(long)]
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Ood,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub samples: usize,
    #[arg(long, value_parser = parse_grid, default_value = "28")]
    pub grid: Grid2D,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
    /// Fluid viscosity.
    #[arg(long, default_value_t = flm_core::synth::DEFAULT_VISCOSITY)]
    pub mu: f64,
    /// Permeability used where the disk family is zero.
    #[arg(long, default_value_t = flm_core::synth::DEFAULT_BACKGROUND_PERMEABILITY)]
    pub background: f64,
    /// Relative residual tolerance of the pressure solve.
    #[arg(long, default_value_t = 1e-10)]
    pub solver_tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    Stlsq,
    RidgeCg,
    Ols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizeMode {
    Auto,
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Named library preset.
    #[arg(long, conflicts_with = "library")]
    pub preset: Option<String>,
    /// Library specification as a JSON file.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Solver::Stlsq)]
    pub solver: Solver,
    /// Sparsity threshold.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 20)]
    pub max_sweeps: usize,
    /// Ridge penalty for `ridge-cg`, or the inner ridge of `stlsq`.
    #[arg(long)]
    pub ridge_lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub cg_tol: f64,
    #[arg(long)]
    pub cg_max_iter: Option<usize>,
    /// Threshold raw coefficients instead of column-normalized ones.
    #[arg(long, visible_alias = "raw-threshold")]
    pub no_col_normalize: bool,
    /// Min-max normalization of inputs and outputs (`auto` follows the preset).
    #[arg(long, value_enum, default_value_t = NormalizeMode::Auto)]
    pub normalize: NormalizeMode,
    /// Subtract the training means after normalizing.
    #[arg(long)]
    pub center: bool,
    /// Drop terms whose coefficient magnitude is below this value.
    #[arg(long)]
    pub prune: Option<f64>,
    /// Cap on the design matrix size in bytes.
    #[arg(long)]
    pub max_bytes: Option<u64>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,
    /// Query the analytic predictor described by this model file.
    #[arg(long)]
    pub analytic: Option<PathBuf>,
    /// Seconds to wait for each response of an external predictor.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    #[arg(long)]
    pub workdir: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub samples: usize,
    #[arg(long, value_parser = parse_grid, default_value = "28")]
    pub grid: Grid2D,
    /// Output length of line tasks (defaults to the grid width).
    #[arg(long)]
    pub line_n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// External predictor command, after `--`.
    #[arg(last = true)]
    pub command: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output grid `N` or `NxM` (image tasks), point count (line tasks), or input
    /// resampling grid (scalar tasks).
    #[arg(long)]
    pub resolution: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset to evaluate; repeat for several splits.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// Report errors in the model's normalized units.
    #[arg(long)]
    pub normalized: bool,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Equation,
    Json,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = ExportFormat::Equation)]
    pub format: ExportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
