use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serpent_core::metrics::DEFAULT_MAX_DT;

#[derive(Parser)]
#[command(name = "serpent", version, about = "Sidewinding waypoint tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write logs, a summary and plots.
    Run { config: PathBuf },
    /// Compare an estimated trajectory CSV against a reference.
    Eval {
        est: PathBuf,
        reference: PathBuf,
        /// Largest time offset allowed when pairing samples, s.
        #[arg(long, default_value_t = DEFAULT_MAX_DT)]
        max_dt: f64,
        /// Rigidly align the estimate to the reference first.
        #[arg(long)]
        align: bool,
    },
    /// Run seeded start poses against the first waypoint.
    Batch {
        config: PathBuf,
        #[arg(long)]
        starts: usize,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let out = serpent_runner::env_output_dir();
    let code = match cli.command {
        Command::Run { config } => serpent_runner::cmd_run(&config, out.as_deref()),
        Command::Eval {
            est,
            reference,
            max_dt,
            align,
        } => serpent_runner::cmd_eval(&est, &reference, max_dt, align, out.as_deref()),
        Command::Batch {
            config,
            starts,
            jobs,
        } => serpent_runner::cmd_batch(&config, starts, jobs, out.as_deref()),
    };
    ExitCode::from(code as u8)
}
