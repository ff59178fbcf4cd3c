//! Batch front-end for the spinzero pipelines.
//!
//! [`run`] parses an argument vector and returns the exit code together with
//! everything destined for standard output and standard error, so the binary
//! and the tests share one code path. Every output starts with (or embeds)
//! the fully resolved configuration.

pub mod commands;
pub mod config;
pub mod fspec;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;
use spinzero::torus::TorusSpinGeometry;
use thiserror::Error;

use crate::fspec::FSpec;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] spinzero::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

/// Exit code and captured streams of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Parser)]
#[command(name = "spinzero", version, about = "Dirac spectra, Green kernels and eigenspinor zero sets on flat tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues nearest zero as JSON lines.
    Spectrum(SpectrumArgs),
    /// Analytic versus finite-difference eigenvalue derivatives as CSV.
    Perturb(PerturbArgs),
    /// Tracks a multiple eigenvalue along a t-grid as CSV.
    Split(SplitArgs),
    /// Zero candidates of one eigenspinor as JSON.
    Zeros(ZerosArgs),
    /// Seeded genericity statistics as JSON.
    Generic(GenericArgs),
    /// Euclidean Green kernel checks as a residual table.
    GreenCheck(GreenCheckArgs),
    /// Exact preimage identities per generator.
    Identities(IdentitiesArgs),
    /// A-hat genus of a degree-d hypersurface of CP^{4k+1}.
    Ahat(AhatArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// Dimension of the torus (2 or 3).
    #[arg(short = 'n', long = "dim", default_value_t = 2)]
    pub dim: usize,
    /// Grid points per direction: one value or a comma list.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<usize>,
    /// Lattice matrix, row-major comma list; columns are the basis vectors.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lattice: Vec<f64>,
    /// Spin structure: comma list of 0 or h (half).
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<String>,
    #[arg(long, default_value_t = spinzero::DEFAULT_SEED)]
    pub seed: u64,
}

/// Geometry flags after defaults are filled in.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedGeometry {
    pub dim: usize,
    pub grid: Vec<usize>,
    pub lattice: Vec<f64>,
    pub delta: Vec<f64>,
    pub seed: u64,
}

fn parse_delta(token: &str) -> Result<f64, CliError> {
    match token.trim() {
        "0" => Ok(0.0),
        "h" | "0.5" | "1/2" => Ok(0.5),
        other => Err(CliError::Usage(format!("delta entry `{other}`: use 0 or h"))),
    }
}

impl GeometryArgs {
    pub fn resolve(&self) -> Result<(ResolvedGeometry, TorusSpinGeometry), CliError> {
        let n = self.dim;
        if !(2..=3).contains(&n) {
            return Err(CliError::Usage(format!("dimension {n} is not supported; use 2 or 3")));
        }
        let grid = match self.grid.len() {
            0 => vec![if n == 2 { 32 } else { 16 }; n],
            1 => vec![self.grid[0]; n],
            k if k == n => self.grid.clone(),
            k => return Err(CliError::Usage(format!("--grid has {k} entries for dimension {n}"))),
        };
        let lattice = match self.lattice.len() {
            0 => DMatrix::<f64>::identity(n, n).as_slice().to_vec(),
            k if k == n * n => self.lattice.clone(),
            k => return Err(CliError::Usage(format!("--lattice has {k} entries, expected {}", n * n))),
        };
        let delta = match self.delta.len() {
            0 => vec![0.0; n],
            k if k == n => self.delta.iter().map(|t| parse_delta(t)).collect::<Result<_, _>>()?,
            k => return Err(CliError::Usage(format!("--delta has {k} entries for dimension {n}"))),
        };
        let geom = TorusSpinGeometry::new(DMatrix::from_row_slice(n, n, &lattice), &delta, &grid)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let resolved = ResolvedGeometry { dim: n, grid, lattice, delta, seed: self.seed };
        Ok((resolved, geom))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Eigenvalues per sign.
    #[arg(short = 'm', long = "count", default_value_t = 4)]
    pub m: usize,
    /// Conformal factor f of the metric (1 + t f) g.
    #[arg(long = "f", default_value = "const:0", value_parser = parse_fspec)]
    pub f: FSpec,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Positive eigenvalue indices 1..=m to check.
    #[arg(short = 'm', long = "count", default_value_t = 1)]
    pub m: usize,
    #[arg(long = "f", default_value = "random", value_parser = parse_fspec)]
    pub f: FSpec,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-3)]
    pub h: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long = "f", default_value = "random", value_parser = parse_fspec)]
    pub f: FSpec,
    /// Enumerated index of the tracked eigenvalue at t = 0.
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub index: i64,
    /// Explicit t-grid; overrides --t-max/--steps.
    #[arg(long = "t-grid", value_delimiter = ',', allow_negative_numbers = true)]
    pub t_grid: Vec<f64>,
    #[arg(long = "t-max", default_value_t = 0.2)]
    pub t_max: f64,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ZerosArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long = "f", default_value = "const:0", value_parser = parse_fspec)]
    pub f: FSpec,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t: f64,
    /// Enumerated eigenpair index (nonzero).
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub index: i64,
    /// Zero threshold; defaults to 1e-4 times the grid-scale Lipschitz bound.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write the eigenspinor as a binary field file.
    #[arg(long)]
    pub save: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenericArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Eigenvalues per sign examined in each trial.
    #[arg(short = 'm', long = "count", default_value_t = 2)]
    pub m: usize,
    /// Number of trials.
    #[arg(short = 'K', long = "trials", default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.1)]
    pub t0: f64,
}

#[derive(Debug, Clone, Args)]
pub struct GreenCheckArgs {
    #[arg(short = 'n', long = "dim", default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Test spinors: gauss:W[,c1,..,cn] or annulus:R1,R2 (repeatable).
    #[arg(long = "spinor")]
    pub spinors: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct IdentitiesArgs {
    #[arg(short = 'n', long = "dim", default_value_t = 2)]
    pub dim: usize,
    #[arg(long = "max-m", default_value_t = 3)]
    pub max_m: usize,
}

#[derive(Debug, Clone, Args)]
pub struct AhatArgs {
    #[arg(short = 'k', default_value_t = 1)]
    pub k: u32,
    #[arg(short = 'd')]
    pub d: u64,
}

fn parse_fspec(s: &str) -> Result<FSpec, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

/// Runs one invocation; `argv[0]` is the program name.
pub fn run<I, S>(argv: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let argv = match config::merge_config(argv) {
        Ok(a) => a,
        Err(e) => return failure(&e),
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome { code: 2, stdout: String::new(), stderr: text }
            } else {
                Outcome { code: 0, stdout: text, stderr: String::new() }
            };
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(report) => Outcome {
            code: if report.failures.is_empty() { 0 } else { 1 },
            stdout: report.stdout,
            stderr: report.failures.iter().map(|f| format!("check failed: {f}\n")).collect(),
        },
        Err(e) => failure(&e),
    }
}

fn failure(e: &CliError) -> Outcome {
    Outcome { code: e.exit_code(), stdout: String::new(), stderr: format!("error: {e}\n") }
}
