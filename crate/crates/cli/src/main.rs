use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mneme_cli::scenario::Scenario;
use mneme_cli::{bounds, runner, CliError};

#[derive(Parser)]
#[command(name = "mneme", version, about = "Mobile DAG ledger simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file over its seeds.
    Run {
        scenario: PathBuf,
        /// Output directory; overrides the scenario's `outputs`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Print an analytic bound.
    #[command(subcommand)]
    Bounds(Bound),
}

#[derive(Subcommand)]
enum Bound {
    DoubleSpend { n: u64 },
    Collusion { n: u64, k: u64, m: u64 },
    PoeTermination { theta: f64, k: usize, k_m: usize },
    Neighbors { n: f64, r: f64 },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            parallel,
        } => {
            let s = Scenario::load(&scenario)?;
            let out = out.unwrap_or_else(|| s.outputs.join(&s.name));
            let summary = runner::run(&s, &out, parallel)?;
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            if !summary.violations.is_empty() {
                return Err(CliError::Violation(summary.violations.join("; ")));
            }
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!("{}: ok ({} seeds)", s.name, s.seeds.len());
        }
        Command::Bounds(b) => {
            let line = match b {
                Bound::DoubleSpend { n } => bounds::double_spend(n)?,
                Bound::Collusion { n, k, m } => bounds::collusion(n, k, m)?,
                Bound::PoeTermination { theta, k, k_m } => bounds::poe_termination(theta, k, k_m)?,
                Bound::Neighbors { n, r } => bounds::neighbors(n, r)?,
            };
            println!("{line}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
