use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;

use error::CliError;

/// Action tube detection tools: simulate, link, trim, evaluate.
#[derive(Parser)]
#[command(name = "cpla", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground truth and noisy detections from a scene spec.
    Simulate {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Link per-frame detections into class-specific tubes.
    Link(LinkArgs),
    /// Trim tubes to their best temporal extent.
    Trim(TrimArgs),
    /// Tube mAP of predictions against ground truth, as CSV on stdout.
    Eval(EvalArgs),
    /// Compare anticipation strategies over a directory of scene specs.
    Study(StudyArgs),
    /// Recall-versus-IoU curves of proposal files.
    ProposalRecall(RecallArgs),
    /// Write ground truth plus one- and two-stage oracle proposals.
    CascadeSim(CascadeSimArgs),
    /// Write the standard drifting-scene fixture (train/ and test/ specs).
    Fixture(FixtureArgs),
}

#[derive(Args)]
pub struct LinkArgs {
    pub detections: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub beta: f64,
    #[arg(long, default_value_t = 10)]
    pub max_tubes: usize,
    /// Minimum mean link score of an extracted tube.
    #[arg(long, default_value_t = 0.1)]
    pub min_score: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrimArgs {
    pub tubes: PathBuf,
    /// Average-length table (JSON).
    #[arg(long, conflicts_with = "training_tubes", required_unless_present = "training_tubes")]
    pub avg_len: Option<PathBuf>,
    /// Ground-truth tubes to measure average lengths from.
    #[arg(long)]
    pub training_tubes: Option<PathBuf>,
    /// `absolute` or `signed`.
    #[arg(long, default_value = "absolute")]
    pub mode: String,
    #[arg(long, default_value_t = 0.7)]
    pub beta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

const DEFAULT_DELTAS: &str = "0.05,0.1,0.2,0.3,0.4,0.5";

#[derive(Args)]
pub struct EvalArgs {
    pub ground_truth: PathBuf,
    pub tubes: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_DELTAS)]
    pub deltas: Vec<f64>,
    /// Add one AP column per class.
    #[arg(long)]
    pub per_class: bool,
    /// `every-point` or `eleven-point`.
    #[arg(long, default_value = "every-point")]
    pub interpolation: String,
}

#[derive(Args)]
pub struct StudyArgs {
    /// Directory of scene specs (`*.json`).
    pub spec_dir: PathBuf,
    /// Training specs; defaults to reseeded copies of the test specs.
    #[arg(long)]
    pub train_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "none,non-motion,lan")]
    pub strategies: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "2,8,16")]
    pub gaps: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_DELTAS)]
    pub deltas: Vec<f64>,
    /// Gradient-descent epochs for the anticipation model.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RecallArgs {
    /// One or more proposal files.
    #[arg(required = true)]
    pub proposals: Vec<PathBuf>,
    /// Ground-truth boxes in the proposal-file layout.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95")]
    pub thresholds: Vec<f64>,
}

#[derive(Args)]
pub struct CascadeSimArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub images: usize,
    #[arg(long, default_value_t = 10)]
    pub boxes_per_image: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub scenes: usize,
    #[arg(long, default_value_t = 2017)]
    pub seed: u64,
    /// Motionless actors.
    #[arg(long = "static")]
    pub still: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { spec, out } => commands::simulate(&spec, &out),
        Command::Link(a) => commands::link(&a),
        Command::Trim(a) => commands::trim(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Study(a) => commands::study(&a),
        Command::ProposalRecall(a) => commands::proposal_recall(&a),
        Command::CascadeSim(a) => commands::cascade_sim(&a),
        Command::Fixture(a) => commands::fixture(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CPLA_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
