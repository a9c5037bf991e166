mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

/// Environment variable supplying the default for `--threads`.
pub const THREADS_ENV: &str = "SPHEMBED_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sphembed", version, about = "Spherical-embedding registration, hair codecs and head fitting")]
pub struct Cli {
    /// JSON config for the command; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; the numerical kernels currently run on one.
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 1)]
    pub threads: usize,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded bumpy-sphere scan, its template, landmarks and cameras.
    SynthScan,
    /// Jointly embed a template and a scan.
    TrainEmbed(TrainEmbedArgs),
    /// Register a template onto a scan with a trained embedding.
    Register(RegisterArgs),
    /// Triangulate 3D landmarks from calibrated 2D observations.
    Triangulate(TriangulateArgs),
    /// Move triangulated landmarks onto an embedded surface.
    RefineLandmarks(RefineArgs),
    /// Strand codec and scalp-map tools.
    #[command(subcommand)]
    Hair(HairCommand),
    /// Hair latent decoder training and sampling.
    #[command(subcommand)]
    Vad(VadCommand),
    /// Generate a head-model scan with known parameters.
    SynthHead,
    /// Fit the head model to a scan and its 3D landmarks.
    Fit3d(Fit3dArgs),
    /// Fit the head model to 2D landmarks.
    Fit2d(Fit2dArgs),
    /// Score a mesh against a ground-truth oracle or a scan.
    Eval(EvalArgs),
    /// Collect the metrics of several runs into one report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct TrainEmbedArgs {
    pub template: PathBuf,
    pub scan: PathBuf,
    /// Template landmarks, CSV `x,y,z`.
    #[arg(long)]
    pub template_landmarks: PathBuf,
    /// Scan landmarks in the same order.
    #[arg(long)]
    pub scan_landmarks: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    pub pair: PathBuf,
    pub template: PathBuf,
    pub scan: PathBuf,
}

#[derive(Debug, Args)]
pub struct TriangulateArgs {
    pub cameras: PathBuf,
    pub landmarks_2d: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    pub pair: PathBuf,
    pub cameras: PathBuf,
    pub landmarks_2d: PathBuf,
    /// Initial 3D landmarks, CSV `x,y,z`.
    pub landmarks: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum HairCommand {
    /// Grow procedural hairstyles on the scalp chart (world-frame strands).
    Synth,
    /// Encode TBN-frame strands into Legendre coefficients (JSON).
    Encode { strands: PathBuf },
    /// Decode Legendre coefficients into TBN-frame strands.
    Decode { coeffs: PathBuf },
    /// Bake world-frame strands into a scalp map.
    Bake { strands: PathBuf },
    /// Resample a scalp map and decode one strand per valid texel.
    Sample { map: PathBuf },
    /// Fit a hair latent to guide strands.
    Fit { decoder: PathBuf, guides: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum VadCommand {
    /// Train a hair decoder on scalp maps sharing one mask.
    Train {
        #[arg(required = true)]
        maps: Vec<PathBuf>,
    },
    /// Decode a random latent into world-frame strands.
    Sample { decoder: PathBuf },
}

#[derive(Debug, Args)]
pub struct Fit3dArgs {
    /// Rigged template bundle.
    pub template: PathBuf,
    pub scan: PathBuf,
    /// Target 3D landmarks, CSV `x,y,z`.
    pub landmarks: PathBuf,
    /// Embedding pair of the scan; required by the implicit surface term.
    #[arg(long)]
    pub pair: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Fit2dArgs {
    pub template: PathBuf,
    pub cameras: PathBuf,
    pub landmarks_2d: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalTarget {
    /// Exact correspondence of a synthetic bumpy-sphere scan.
    Oracle,
    /// Scan-to-mesh distance against a scan surface.
    Scan,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Mesh to score (for `oracle`, a registered template).
    pub mesh: PathBuf,
    #[arg(long, value_enum)]
    pub against: EvalTarget,
    /// Template the mesh was registered from (oracle).
    #[arg(long, required_if_eq("against", "oracle"))]
    pub template: Option<PathBuf>,
    /// Bump field written by `synth-scan` (oracle).
    #[arg(long, required_if_eq("against", "oracle"))]
    pub field: Option<PathBuf>,
    /// Scan mesh (scan).
    #[arg(long, required_if_eq("against", "scan"))]
    pub scan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories containing `manifest.json` and `metrics.json`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(metrics) => {
            print!("{metrics}");
            ExitCode::SUCCESS
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}
