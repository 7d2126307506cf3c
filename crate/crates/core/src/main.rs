use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driftlasso::config::RunConfig;
use driftlasso::experiments::{
    cmd_cv, cmd_figure1, cmd_fit, cmd_scaling_study, cmd_simulate, cmd_verify, ExperimentError, Overrides,
};

#[derive(Parser)]
#[command(name = "driftlasso", version, about = "Sparse drift estimation for ergodic diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and write them as CSV.
    Simulate(Common),
    /// Fit MLE and Lasso.
    Fit(Common),
    /// Cross-validate the Lasso penalty.
    Cv(Common),
    /// Sparse SineQuadratic comparison of Lasso and MLE.
    Figure1(Common),
    /// Error-rate sweep over the observation horizon.
    ScalingStudy(Common),
    /// Basic/oracle inequality frequencies and concentration table.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; does not affect results.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<Vec<String>, ExperimentError> {
    let (name, common, cmd): (&str, &Common, fn(&RunConfig, usize) -> _) = match &cli.command {
        Command::Simulate(c) => ("simulate", c, cmd_simulate),
        Command::Fit(c) => ("fit", c, cmd_fit),
        Command::Cv(c) => ("cv", c, cmd_cv),
        Command::Figure1(c) => ("figure1", c, cmd_figure1),
        Command::ScalingStudy(c) => ("scaling-study", c, cmd_scaling_study),
        Command::Verify(c) => ("verify", c, cmd_verify),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    Overrides {
        seed: common.seed,
        out_dir: common.out_dir.clone(),
        trials: common.trials,
    }
    .apply(&mut cfg)?;
    let threads = common
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let outcome = cmd(&cfg, threads)?;
    println!("{name}: wrote {} files to {}", outcome.files.len(), outcome.out_dir.display());
    println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
    Ok(outcome.failed_checks)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(failed) if failed.is_empty() => ExitCode::SUCCESS,
        Ok(failed) => {
            for f in failed {
                eprintln!("check failed: {f}");
            }
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
