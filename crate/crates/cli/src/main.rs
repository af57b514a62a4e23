//! `defocus`: synthesize data, train, evaluate, deblur and run ablations.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use defocus_core::blur::MapModel;
use defocus_core::nets::Variant;
use defocus_core::train::ScheduleMode;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "defocus", version, about = "Defocus-map-conditioned single-image deblurring")]
struct Cli {
    /// Worker threads (1 gives bit-reproducible runs; default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic (sharp, blurry, defocus map) dataset.
    Synth(SynthArgs),
    /// Train a model with the three-stage or end-to-end schedule.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset and write a report.
    Eval(EvalArgs),
    /// Deblur one PNG image.
    Infer(InferArgs),
    /// Train and evaluate every variant, printing the ablation table.
    Ablate(AblateArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: usize,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, default_value = "64x64")]
    pub size: String,
    #[arg(long, default_value_t = 3.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 0.002)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 16)]
    pub levels: usize,
    #[arg(long, default_value = "gaussian_field")]
    pub map_model: MapModel,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Config file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's variant.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Overrides the config's schedule_mode.
    #[arg(long)]
    pub schedule: Option<ScheduleMode>,
    /// Checkpoints are written to PREFIX.s1/.s2/.s3 (or PREFIX.e2e), the log to PREFIX.log.
    #[arg(long)]
    pub out: PathBuf,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the estimated defocus map as DMF.
    #[arg(long)]
    pub dump_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out dataset. Without it the last ninth of --data is held out.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Seed for the random shapes and values.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupt the named check's analytic gradient (harness self-test).
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        defocus_core::par::configure_threads(n);
    }
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Infer(a) => commands::infer(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
