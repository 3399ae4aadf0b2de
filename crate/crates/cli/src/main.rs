use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlbreak_cli::{exit_code, run_file, Mode};

#[derive(Parser)]
#[command(name = "nlbreak", version, about = "Collision-induced breakage solver and verification runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the sectional system and run every trajectory check
    Solve(RunArgs),
    /// Run the stochastic particle ensemble
    Mc(RunArgs),
    /// Check the kernel, daughter distribution and weight against their hypotheses
    Validate(RunArgs),
    /// Solve the scenario for each ell in sweep.ell_values
    Sweep(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Solve(a) => (Mode::Solve, a),
        Command::Mc(a) => (Mode::Mc, a),
        Command::Validate(a) => (Mode::Validate, a),
        Command::Sweep(a) => (Mode::Sweep, a),
    };
    let result = run_file(mode, &args.config, &args.out, args.seed);
    match &result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            println!("{}", if outcome.passed { "all checks passed" } else { "some checks failed" });
        }
        Err(e) => eprintln!("error: {e:#}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
