//! `pseudocam` command-line tool.
//!
//! Exit codes: 0 success, 1 input error, 2 numeric-domain error,
//! 3 non-convergence.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "pseudocam", version, about = "Pseudo-perspective landmark fitting tools")]
pub struct Cli {
    /// Seed for every random choice (mask sampling, bench scenario offset).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// More progress output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project 3D points with a camera file; writes `index,u,v` CSV.
    Project(ProjectArgs),
    /// Shrinkage from S, f and v_z, or the analytic prior of a capture geometry.
    ConvertRho(ConvertRhoArgs),
    /// Fit a problem file; writes result JSON and a cost-log CSV.
    Fit(FitArgs),
    /// Run synthetic capture scenarios; writes a Markdown report and CSV tables.
    Bench(BenchArgs),
    /// Build a sparse guidance mask from projected landmarks; writes PGM.
    Mask(MaskArgs),
    /// Landmark cost over a (f, t_z) grid for a perspective problem.
    AmbiguityScan(ScanArgs),
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub camera: PathBuf,
    /// `.obj` or `.csv` (`index,x,y,z`).
    #[arg(long)]
    pub points: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ConvertRhoArgs {
    #[arg(long = "S", value_name = "S", requires_all = ["f", "vz"], conflicts_with = "geometry")]
    pub scale: Option<f64>,
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub vz: Option<f64>,
    /// Capture geometry JSON (`sensor_width`, `face_width`, `standoff`, `frame_fill`).
    #[arg(long)]
    pub geometry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Orthographic stage, then free the shrinkage (pseudo problems only).
    #[arg(long)]
    pub staged: bool,
    /// Result JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Cost-log CSV; defaults to the result path with `.costs.csv`.
    #[arg(long)]
    pub cost_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario JSON: one scenario or an array of them (repeatable).
    #[arg(long, required = true)]
    pub scenario: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Model JSON in centimetres; defaults to the bundled toy head.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "PSEUDOCAM_THREADS")]
    pub threads: Option<usize>,
    /// Also write each frame's problem file and the sealed truth.
    #[arg(long)]
    pub emit_problems: bool,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Landmark CSV `index,u,v` in pixel coordinates.
    #[arg(long)]
    pub landmarks: PathBuf,
    /// Row indices of the nose landmarks, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub nose: Vec<usize>,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// Erosion radius as a fraction of the landmark bounding-box diagonal.
    #[arg(long, default_value_t = 0.03)]
    pub contour_frac: f64,
    /// Nose exclusion radius as a fraction of the same diagonal.
    #[arg(long, default_value_t = 0.08)]
    pub nose_frac: f64,
    #[arg(long, default_value_t = 0.01)]
    pub keep: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the mask as run-length JSON.
    #[arg(long)]
    pub rle: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Perspective problem; its `initial` state is the grid centre, otherwise
    /// the joint focal/depth fit is.
    #[arg(long)]
    pub problem: PathBuf,
    /// Cells per axis (odd).
    #[arg(long, default_value_t = 41)]
    pub n: usize,
    /// Natural-log half span of both axes.
    #[arg(long, default_value_t = 0.5)]
    pub span: f64,
    /// CSV `f,t_z,cost`.
    #[arg(long)]
    pub out: PathBuf,
    /// Gnuplot data blocks.
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(commands::EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
