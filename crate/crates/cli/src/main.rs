mod commands;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pvrnn_hri::trainer::ProfileName;

/// Train PV-RNN cognitive profiles and run simulated physical interaction.
#[derive(Debug, Parser)]
#[command(name = "pvhri", version)]
struct Cli {
    /// Run configuration (JSON). Every section is optional.
    #[arg(long, global = true, env = "PVHRI_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic primitives and a trained posture observer.
    GenData(GenDataArgs),
    /// Train one checkpoint per profile.
    Train(TrainArgs),
    /// Open-loop generation of every primitive, with per-step MSE.
    Generate(GenerateArgs),
    /// Error regression against an evidence trajectory file.
    Regress(RegressArgs),
    /// One closed-loop trial with the scripted human.
    Trial(TrialArgs),
    /// The profile × pair × repeat trial matrix and its summary tables.
    Matrix(MatrixArgs),
    /// Training, generation, transition and latent analyses over a checkpoint set.
    Analyze(AnalyzeArgs),
    /// Scripted controller run with torque pulses.
    Scenario(ScenarioArgs),
    /// Live session over a websocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output directory for <label>.json, <label>.csv and observer.json.
    #[arg(long)]
    out: PathBuf,
    /// Observer seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Profile to train; repeat for several. Defaults to all three.
    #[arg(long = "profile", value_enum)]
    profiles: Vec<ProfileArg>,
    /// Output directory; writes <profile>.json and <profile>_curves.csv.
    #[arg(long)]
    out: PathBuf,
    /// Directory with <label>.json training trajectories. Defaults to generated primitives.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Total epochs (overrides the config).
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed for weight init and training noise (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from an existing checkpoint in --out up to the epoch total.
    #[arg(long)]
    resume: bool,
    /// Progress line on stderr every N epochs (0 = silent).
    #[arg(long, default_value_t = 500)]
    log_every: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Mean,
    Sampled,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    mode: ModeArg,
    /// Sampled-mode draws averaged into the MSE curve.
    #[arg(long, default_value_t = 20)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RegressArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evidence trajectory (JSON, or CSV with a header line).
    #[arg(long)]
    evidence: PathBuf,
    /// Primitive the network starts out intending.
    #[arg(long)]
    intent: String,
    /// Network ticks; the evidence loops.
    #[arg(long, default_value_t = 180)]
    steps: usize,
    #[arg(long)]
    observer: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrialArgs {
    /// Directory holding <profile>.json checkpoints.
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long, value_enum)]
    profile: ProfileArg,
    /// Primitive the robot intends.
    #[arg(long)]
    robot: String,
    /// Primitive the human induces.
    #[arg(long)]
    human: String,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Human surrogate gain (Nm/rad, overrides the config).
    #[arg(long)]
    gain: Option<f64>,
    #[arg(long)]
    observer: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatrixArgs {
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Seed of the first trial; later trials count up.
    #[arg(long, default_value_t = 100)]
    seed: u64,
    /// Also run congruent pairs (AA, BB, CC).
    #[arg(long)]
    congruent: bool,
    /// Evaluate the protocol trends and exit 3 on failure. Implies --congruent.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    gain: Option<f64>,
    #[arg(long)]
    observer: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Directory holding <profile>.json checkpoints and, for training trends, <profile>_curves.csv.
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Evaluate the analysis criteria and exit 3 on failure.
    #[arg(long)]
    check: bool,
    #[arg(long, default_value_t = 20)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Primitive the transition runs start from.
    #[arg(long, default_value = "B")]
    intent: String,
    #[arg(long)]
    observer: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario script (JSON). Defaults to the built-in pulse demo.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Write the built-in pulse demo script here and exit.
    #[arg(long)]
    write_demo: Option<PathBuf>,
    /// Tick log CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Checkpoint file, or a directory holding <profile>.json.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "moderate")]
    profile: ProfileArg,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8765)]
    port: u16,
    /// Primitive the robot intends at start.
    #[arg(long, default_value = "A")]
    intent: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    observer: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Rigid,
    Moderate,
    Flexible,
}

impl From<ProfileArg> for ProfileName {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Rigid => ProfileName::Rigid,
            ProfileArg::Moderate => ProfileName::Moderate,
            ProfileArg::Flexible => ProfileName::Flexible,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] pvrnn_hri::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0} check(s) failed")]
    Check(usize),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) | CliError::Io(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let config = commands::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::GenData(a) => commands::gen_data(&config, a),
        Command::Train(a) => commands::train(&config, a),
        Command::Generate(a) => commands::generate(a),
        Command::Regress(a) => commands::regress(&config, a),
        Command::Trial(a) => commands::trial(&config, a),
        Command::Matrix(a) => commands::matrix(&config, a),
        Command::Analyze(a) => commands::analyze(&config, a),
        Command::Scenario(a) => commands::scenario(a),
        Command::Serve(a) => serve::serve(&config, a),
    }
}
