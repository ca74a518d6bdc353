//! The `adam-lab` command line.
//!
//! ```text
//! adam-lab run           one trajectory  -> run.jsonl + run_summary.csv
//! adam-lab sweep         (β1, β2) grid   -> sweep.csv [+ sweep_gap.pgm]
//! adam-lab region        C1 ∧ C2 mask    -> region_n<N>.csv + region_n<N>.pgm
//! adam-lab concentration second-moment concentration check -> concentration.json
//! adam-lab verify        randomized invariant suite -> verify.json
//! ```
//!
//! Every artifact is written under `--out-dir` and listed on stdout as
//! `wrote <path>`. Options may also come from `--config <file>` with
//! `key = value` lines; flags on the command line win. `ADAM_LAB_SEED`
//! supplies the seed when `--seed` is absent.
//!
//! Exit codes: 0 success, 1 a requested check failed (or an artifact could
//! not be written), 2 usage error.

mod commands;
pub mod config_file;
pub mod pgm;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use pgm::{emit_pgm, emit_pgm_annotated, Normalization};

use crate::error::LabError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "adam-lab",
    version,
    about = "Convergence and divergence experiments for vanilla Adam",
    args_override_self = true,
    allow_negative_numbers = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Adam on one problem and log the trajectory.
    Run(RunArgs),
    /// Run a (beta1, beta2) grid of experiments.
    Sweep(SweepArgs),
    /// Evaluate the analytic divergence region on a grid.
    Region(RegionArgs),
    /// Check the second-moment concentration sandwich along a run.
    Concentration(ConcentrationArgs),
    /// Run the randomized per-step invariant suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Directory for all artifacts.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// File of `key = value` defaults; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Problem family: reddi, divpw, nonreal or lsq.
    #[arg(long)]
    pub problem: String,
    /// Number of components (default: 3 for reddi, 20 for divpw, 10 for
    /// nonreal, rows of --data for lsq).
    #[arg(long)]
    pub n: Option<usize>,
    /// Scale parameter (default: 1 for divpw, 10 for nonreal).
    #[arg(long)]
    pub a: Option<f64>,
    /// Least-squares data: headerless CSV, one equation per row, last column b.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AdamArgs {
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta0: f64,
    /// Denominator offset (default: 0, with v_init = 1e-12).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Initial second moment (default: 1e-12 when eps = 0, else 0).
    #[arg(long)]
    pub v_init: Option<f64>,
    /// Fold bias correction into the stepsize.
    #[arg(long)]
    pub bias_correction: bool,
    /// Stepsize schedule: invsqrt or constant.
    #[arg(long, default_value = "invsqrt")]
    pub schedule: String,
}

#[derive(Debug, Clone, Args)]
pub struct BudgetArgs {
    /// Budget in epochs of n steps.
    #[arg(long, conflicts_with = "iters")]
    pub epochs: Option<u64>,
    /// Budget in single steps.
    #[arg(long)]
    pub iters: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub adam: AdamArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    /// Index order: wr (with replacement), rr (random shuffling) or cyclic.
    #[arg(long, default_value = "wr")]
    pub scheme: String,
    /// Sampling seed (falls back to ADAM_LAB_SEED, then 0).
    #[arg(long, env = "ADAM_LAB_SEED")]
    pub seed: Option<u64>,
    /// Starting point, comma separated (default: 1 for divpw, else 0).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Keep every N-th step in the JSONL log.
    #[arg(long, default_value_t = 1)]
    pub log_every: u64,
    /// Convergence tolerance on the tail-mean gap (or gradient norm).
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// Divergence cutoff on |x|.
    #[arg(long, default_value_t = 1e6)]
    pub cutoff: f64,
    /// Exit 1 unless the run is classified as this outcome.
    #[arg(long)]
    pub expect: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Grid `R1xR2`: beta1 = k/R1 and beta2 = k/R2 for k = 0..R.
    #[arg(long, default_value = "50x50")]
    pub grid: String,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(long, default_value_t = 0.1)]
    pub eta0: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long)]
    pub v_init: Option<f64>,
    #[arg(long)]
    pub bias_correction: bool,
    #[arg(long, default_value = "invsqrt")]
    pub schedule: String,
    #[arg(long, default_value = "cyclic")]
    pub scheme: String,
    /// Base seed; cell j uses base + j.
    #[arg(long, env = "ADAM_LAB_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seeds_per_cell: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e6)]
    pub cutoff: f64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Reuse rows from an earlier, possibly interrupted, run.
    #[arg(long)]
    pub resume: bool,
    /// Record per-cell wall time (makes the CSV non-reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Also write a log-scale PGM heatmap of the final gap.
    #[arg(long)]
    pub heatmap: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RegionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Cells per axis; values are (i + 0.5)/res.
    #[arg(long, default_value_t = 200)]
    pub res: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ConcentrationArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "divpw")]
    pub problem: String,
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.9999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eta0: f64,
    /// Concentration level (default: 1/(4n)).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 25_000)]
    pub iters: u64,
    #[arg(long, default_value = "-1000", allow_hyphen_values = true)]
    pub x0: String,
    #[arg(long, env = "ADAM_LAB_SEED")]
    pub seed: Option<u64>,
    /// Evaluate every N-th step.
    #[arg(long, default_value_t = 1)]
    pub stride: u64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, env = "ADAM_LAB_SEED")]
    pub seed: Option<u64>,
}

/// Errors that end a command, with their exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    CheckFailed(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::CheckFailed(_) | CliError::Runtime(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Io { .. } | LabError::Csv { .. } | LabError::Json(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Output goes to stdout/stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match config_file::expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match commands::dispatch(cli.command, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::CheckFailed(m) => eprintln!("check failed: {m}"),
                CliError::Runtime(m) => eprintln!("error: {m}"),
            }
            e.exit_code()
        }
    }
}
