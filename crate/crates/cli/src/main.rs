//! `scsr`: synthetic cohorts, reconstruction training, deviation maps,
//! baselines and evaluation from the command line.

mod commands;
mod error;
mod grid;
mod layered;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use error::{CliError, EXIT_CODES_HELP, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "scsr",
    version,
    about = "Stochastic cortical self-reconstruction pipeline"
)]
pub struct Cli {
    /// Worker threads for reconstruction and statistics. Results do not
    /// depend on this value.
    #[arg(long, global = true, env = "SCSR_THREADS", default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a subdivided icosahedron as ASCII PLY.
    MakeMesh(MakeMeshArgs),
    /// Partition a mesh into contiguous parcels and name ROI sets.
    Parcellate(ParcellateArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Stratified train/validation/test split of a cohort.
    Split(SplitArgs),
    /// Train the reconstruction network on healthy (CN) subjects.
    Train(TrainArgs),
    /// Estimate per-vertex residual standard deviations on healthy subjects.
    Sigma(SigmaArgs),
    /// Compute deviation maps.
    Deviate(DeviateArgs),
    /// Fit or apply a reference normative model.
    Baseline(BaselineArgs),
    /// Compare ROI scores between diagnostic groups.
    Evaluate(EvaluateArgs),
    /// Reconstruction error and AUC over a grid of sampling rates and centiles.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct MakeMeshArgs {
    /// Subdivision order (0 gives the 12-vertex icosahedron).
    #[arg(long)]
    pub order: u32,
    #[arg(long, default_value = "mesh.ply")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ParcellateArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Number of parcels.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Named ROI as NAME=ID,ID,... (repeatable).
    #[arg(long = "roi", value_name = "NAME=IDS")]
    pub rois: Vec<String>,
    #[arg(long, default_value = "parcellation.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Cohort generator settings (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub parcellation: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "cohort.scb")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.8,0.2,0")]
    pub fractions: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receives train.scb, val.scb and test.scb.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Vertex,
    Parcel,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Training settings (TOML); flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Fraction of vertices revealed per training sample.
    #[arg(long)]
    pub sampling_rate: Option<f64>,
    #[arg(long, value_enum, default_value = "vertex")]
    pub strategy: StrategyArg,
    /// Needed for parcel sampling and ROI exclusion.
    #[arg(long)]
    pub parcellation: Option<PathBuf>,
    #[arg(long)]
    pub exclude_roi: Option<String>,
    #[arg(long, default_value = "model.scm")]
    pub out: PathBuf,
}

/// Reconstruction settings shared by sigma, deviate and sweep.
#[derive(Debug, Args)]
pub struct ReconArgs {
    /// Reconstruction settings (TOML); flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of reconstructions per subject.
    #[arg(long)]
    pub m: Option<usize>,
    /// Base seed; iteration i uses base ^ i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// ROI whose vertices are never revealed to the model.
    #[arg(long)]
    pub exclude_roi: Option<String>,
    #[arg(long)]
    pub parcellation: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CentileArgs {
    /// Sampling rate.
    #[arg(long)]
    pub s: Option<f64>,
    /// Reference centile.
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SigmaArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Healthy subjects; non-CN subjects are ignored.
    #[arg(long)]
    pub val: PathBuf,
    #[command(flatten)]
    pub centile: CentileArgs,
    #[command(flatten)]
    pub recon: ReconArgs,
    #[arg(long, default_value = "sigma.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DeviateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub sigma: PathBuf,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, conflicts_with = "all", required_unless_present = "all")]
    pub subject_id: Option<String>,
    /// Every subject of the cohort.
    #[arg(long)]
    pub all: bool,
    /// ROI names whose mean Z is reported (from the parcellation).
    #[arg(long, value_delimiter = ',')]
    pub rois: Vec<String>,
    /// Also write `<id>.ply` with Z as a vertex scalar.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[command(flatten)]
    pub centile: CentileArgs,
    #[command(flatten)]
    pub recon: ReconArgs,
    #[arg(long, default_value = "maps")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(subcommand)]
    pub kind: BaselineKind,
}

#[derive(Debug, Subcommand)]
pub enum BaselineKind {
    /// Age-bracket population reference (vertex level).
    Popref(BaselineCommand),
    /// Regression-spline GAM per parcel.
    Gam(BaselineCommand),
    /// GAMLSS with fractional-polynomial location and scale.
    Gamlss(BaselineCommand),
    /// Bayesian linear regression on a B-spline basis.
    Blr(BaselineCommand),
}

#[derive(Debug, Args)]
pub struct BaselineCommand {
    #[command(subcommand)]
    pub action: BaselineAction,
}

#[derive(Debug, Subcommand)]
pub enum BaselineAction {
    /// Fit on a healthy cohort; non-CN subjects are ignored.
    Fit(BaselineFitArgs),
    /// Score a cohort and write per-subject ROI mean Z.
    Apply(BaselineApplyArgs),
}

#[derive(Debug, Args)]
pub struct BaselineFitArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Required for the parcel-level models.
    #[arg(long)]
    pub parcellation: Option<PathBuf>,
    /// Age bracket width in years (popref only).
    #[arg(long)]
    pub bracket_width: Option<f64>,
    /// Gradient-ascent iteration cap (gamlss only).
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Accepted final gradient norm (gamlss only).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Weight prior precision (blr only).
    #[arg(long)]
    pub prior_precision: Option<f64>,
    #[arg(long, default_value = "baseline.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineApplyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub parcellation: PathBuf,
    #[arg(long, default_value = "ad_roi")]
    pub roi: String,
    #[arg(long, default_value = "scores.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of deviation maps (`<id>.csv` with sidecars).
    #[arg(long, required_unless_present = "scores", conflicts_with = "scores")]
    pub maps_dir: Option<PathBuf>,
    /// Per-subject scores CSV from `baseline ... apply`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Cohort file providing each subject's diagnosis.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "ad_roi")]
    pub roi: String,
    /// Dataset label written to the report.
    #[arg(long, default_value = "scsr")]
    pub name: String,
    #[arg(long, default_value_t = 10_000)]
    pub n_perm: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled cohort with CN and AD subjects.
    #[arg(long)]
    pub val: PathBuf,
    /// Healthy cohort for sigma; defaults to the CN subjects of --val.
    #[arg(long)]
    pub healthy: Option<PathBuf>,
    #[arg(long, default_value = "ad_roi")]
    pub roi: String,
    /// start:stop:step (stop inclusive) or a comma list.
    #[arg(long, default_value = "0.01:0.30:0.01")]
    pub s_grid: String,
    #[arg(long, default_value = "0.5,0.75,0.95,0.99")]
    pub q_grid: String,
    #[command(flatten)]
    pub recon: ReconArgs,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

fn command() -> clap::Command {
    fn with_exit_codes(cmd: clap::Command) -> clap::Command {
        cmd.after_help(EXIT_CODES_HELP)
            .mut_subcommands(with_exit_codes)
    }
    with_exit_codes(Cli::command())
}

fn main() -> ExitCode {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let err = CliError::usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{err}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let cli = Cli::from_arg_matches(&matches).expect("matches come from the same definition");
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
