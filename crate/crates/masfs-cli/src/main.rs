use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use masfs_cli::experiment::{
    cmd_compare, cmd_evaluate, cmd_gen_costs, cmd_gen_trace, cmd_simulate, cmd_train, CliError,
    Experiment, Overrides,
};

#[derive(Parser)]
#[command(
    name = "masfs",
    version,
    about = "Multi-accelerator inference scheduling: simulate, train, and compare schedulers"
)]
struct Cli {
    /// Overrides sim.seed and trace.seed (and train.seed for `train`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the `out` config key.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress per-run summary lines.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured scheduler over N replications.
    Simulate { cfg: PathBuf },
    /// Train a DDPG policy and write checkpoint + learning curve.
    Train { cfg: PathBuf },
    /// Roll out a trained checkpoint (mode inferred from its header).
    Evaluate {
        cfg: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run several schedulers on one identical trace and emit plot data.
    Compare {
        cfg: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        schedulers: Vec<String>,
    },
    /// Write the generated trace (and generated tenants/costs) to disk.
    GenTrace { cfg: PathBuf },
    /// Write a synthetic cost table to disk.
    GenCosts { cfg: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let over = Overrides { seed: cli.seed, out: cli.out, quiet: cli.quiet };
    match cli.cmd {
        Cmd::Simulate { cfg } => {
            let exp = Experiment::load(&cfg, &over)?;
            let name = exp.require_scheduler()?;
            cmd_simulate(&exp, &name)
        }
        Cmd::Train { cfg } => {
            let exp = Experiment::load(&cfg, &over)?;
            cmd_train(&exp)
        }
        Cmd::Evaluate { cfg, checkpoint } => {
            let exp = Experiment::load(&cfg, &over)?;
            cmd_evaluate(&exp, checkpoint)
        }
        Cmd::Compare { cfg, schedulers } => {
            let exp = Experiment::load(&cfg, &over)?;
            cmd_compare(&exp, &schedulers)
        }
        Cmd::GenTrace { cfg } => {
            let exp = Experiment::load(&cfg, &over)?;
            cmd_gen_trace(&exp)
        }
        Cmd::GenCosts { cfg } => {
            let exp = Experiment::load(&cfg, &over)?;
            cmd_gen_costs(&exp)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Runtime(_)) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
