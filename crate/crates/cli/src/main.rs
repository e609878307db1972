//! `bellfrac`: nonlocal-fraction estimation from the command line.
//!
//! Exit codes: 0 success, 2 parameter error, 3 missing data, 4 domain error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use bellfrac_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bellfrac", version, about = "Entanglement estimation from the nonlocal fraction")]
pub struct Cli {
    /// Where to write the run manifest [default: beside the first output file]
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build states
    #[command(subcommand)]
    State(StateCommand),
    /// Nonlocal fraction of a state by Monte Carlo sampling
    Pv(PvArgs),
    /// Nonlocal fraction of Werner-like states over a visibility range
    Sweep(SweepArgs),
    /// Per-sample maximal Bell values of a reference state
    Dist(DistArgs),
    /// Nonlocal fraction at other visibilities from stored samples
    Rescale(RescaleArgs),
    /// Concurrence of a state
    Conc(ConcArgs),
    /// Published fits, refitting and parameter estimation
    #[command(subcommand)]
    Fit(FitCommand),
    /// Coincidence-count datasets
    #[command(subcommand)]
    Exp(ExpCommand),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Master seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Number of sampled measurement settings
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
}

#[derive(Args, Debug)]
pub struct IneqArgs {
    /// Directory of `*.ineq` files, or an expanded-orbit cache
    #[arg(long, env = "BELLFRAC_INEQ_DIR")]
    pub ineq_dir: Option<PathBuf>,
    /// Bundled inequalities to use instead (comma separated: chsh, svetlichny, mermin)
    #[arg(long, value_delimiter = ',')]
    pub bundled: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum StateCommand {
    /// Write a density matrix JSON file
    Make(StateMakeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Werner,
    Gghz,
    Gsms2,
    Gsms3,
    Mems,
    Phn,
    Basis,
}

#[derive(Args, Debug)]
pub struct StateMakeArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Angle of the generalized GHZ state, in degrees
    #[arg(long, default_value_t = 45.0)]
    pub theta_deg: f64,
    /// White-noise visibility
    #[arg(long)]
    pub v: Option<f64>,
    /// Number of qubits
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub y: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Bit string of a computational basis state
    #[arg(long)]
    pub bits: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PvArgs {
    /// Density matrix JSON
    #[arg(long)]
    pub state: PathBuf,
    #[command(flatten)]
    pub ineq: IneqArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmeForm {
    /// Exact X-state expression
    Xstate,
    /// Expression as published
    Paper,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 45.0)]
    pub theta_deg: f64,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long)]
    pub v_min: f64,
    #[arg(long)]
    pub v_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Three-qubit concurrence column
    #[arg(long, value_enum, default_value_t = GmeForm::Xstate)]
    pub gme_form: GmeForm,
    #[command(flatten)]
    pub ineq: IneqArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DistArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[command(flatten)]
    pub ineq: IneqArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Samples CSV; the JSON sidecar goes beside it
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RescaleArgs {
    /// Samples CSV written by `dist`
    #[arg(long)]
    pub input: PathBuf,
    /// Visibilities (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub v: Vec<f64>,
    #[arg(long)]
    pub v_min: Option<f64>,
    #[arg(long)]
    pub v_max: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Adds `p_v_low,p_v_high` columns at thresholds `1/v ± margin`
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConcMethod {
    /// Two-qubit Wootters concurrence
    Wootters,
    /// Three-qubit GME concurrence of an X-state
    GmeXstate,
}

#[derive(Args, Debug)]
pub struct ConcArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, value_enum)]
    pub method: ConcMethod,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum FitCommand {
    /// Evaluate a published fit or a stored curve
    Eval(FitEvalArgs),
    /// Least-squares refit on a fractional-power basis
    Refit(FitRefitArgs),
    /// Angle and reference visibility from a (v, p_v) curve
    EstimateThetaV0(EstimateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveName {
    #[value(name = "c-lower-2q")]
    CLower2q,
    CMems,
    CPhn3,
    CGmePure3,
    #[value(name = "c-gme-45")]
    CGme45,
    #[value(name = "c-gme-35")]
    CGme35,
    #[value(name = "v-2q")]
    V2q,
    #[value(name = "v-3q")]
    V3q,
    ConcWerner2,
    ConcWerner3Paper,
    ConcWerner3Xstate,
}

#[derive(Args, Debug)]
pub struct FitEvalArgs {
    #[arg(long, value_enum, required_unless_present = "curve_file")]
    pub curve: Option<CurveName>,
    /// FitCurve JSON
    #[arg(long, conflicts_with = "curve")]
    pub curve_file: Option<PathBuf>,
    /// Angle for the visibility and concurrence curves, in degrees
    #[arg(long, default_value_t = 45.0)]
    pub theta_deg: f64,
    /// Nonlocal fractions in percent (comma separated)
    #[arg(long, value_delimiter = ',', required = true)]
    pub pv: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitRefitArgs {
    /// CSV of `pv,value` points
    #[arg(long, required_unless_present = "analytic_2q")]
    pub points: Option<PathBuf>,
    /// Fit the closed-form two-qubit Werner curve instead
    #[arg(long, conflicts_with = "points")]
    pub analytic_2q: bool,
    #[arg(long, default_value_t = 0.72)]
    pub v_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub v_max: f64,
    #[arg(long, default_value_t = 200)]
    pub n_points: usize,
    /// `2q`, `3q`, or comma-separated exponents
    #[arg(long, default_value = "2q")]
    pub basis: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// CSV of `v,p_v` with p_v in percent
    #[arg(long)]
    pub curve: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ExpCommand {
    /// Synthetic dataset from a three-qubit state
    Synth(ExpSynthArgs),
    /// Mix a state's counts with the computational-basis counts
    Mix(ExpMixArgs),
    /// Nonlocal fraction from counts
    Pv(ExpPvArgs),
    /// Poisson resampling of a statistic
    Resample(ExpResampleArgs),
}

#[derive(Args, Debug)]
pub struct ExpSynthArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// Number of eight-setting blocks; block i uses the settings of sample i
    #[arg(long)]
    pub blocks: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Expected counts per setting
    #[arg(long, default_value_t = 4000.0)]
    pub total: f64,
    /// Replace counts by Poisson draws with this seed
    #[arg(long)]
    pub poisson_seed: Option<u64>,
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExpMixArgs {
    /// Counts of the state
    #[arg(long)]
    pub state: PathBuf,
    /// Counts of |000⟩ … |111⟩, in that order (comma separated)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub basis: Vec<PathBuf>,
    /// Weight of the state counts
    #[arg(long)]
    pub vc: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExpPvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub ineq: IneqArgs,
    /// Bell-value margin of the reported interval
    #[arg(long, default_value_t = bellfrac_core::expdata::DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExpResampleArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// total-counts, correlator or pv-cc
    #[arg(long, default_value = "pv-cc")]
    pub statistic: String,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[command(flatten)]
    pub ineq: IneqArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::MissingData(_) => 3,
                Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 3,
                Error::NotXState { .. }
                | Error::Alignment(_)
                | Error::IncompleteBlock(_)
                | Error::Fit(_)
                | Error::Estimation(_) => 4,
                _ => 2,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 3;
            }
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
