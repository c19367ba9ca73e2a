use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lrwi::{execute, Command};

#[derive(Parser)]
#[command(name = "lrwi", version, about = "Frequency-domain FWI, WRI and lift-and-relax waveform inversion")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Model observed data from the true model.
    Forward(Common),
    /// Run a multi-band inversion.
    Invert(Common),
    /// Compare analytic gradients with central differences.
    Gradcheck(Common),
    /// Condition numbers of the augmented normal matrix over a penalty grid.
    Condstudy(Common),
    /// Final model error over a penalty grid.
    Betasweep(Common),
    /// Final model error against the starting frequency.
    Freqsweep(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Forward(a) => (Command::Forward, a),
        Cmd::Invert(a) => (Command::Invert, a),
        Cmd::Gradcheck(a) => (Command::Gradcheck, a),
        Cmd::Condstudy(a) => (Command::Condstudy, a),
        Cmd::Betasweep(a) => (Command::Betasweep, a),
        Cmd::Freqsweep(a) => (Command::Freqsweep, a),
    };
    match execute(cmd, &args.config, &args.out, args.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
