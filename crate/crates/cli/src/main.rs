use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vguide_cli::selftest::run_selftest;
use vguide_cli::{cmd_run, cmd_shapes, cmd_sweep, parse_scenario, CliError, RunOptions, Status, SweepOptions};

/// Simulates exoskeleton joints under a variable-width virtual guide and
/// writes CSV logs for external plotting.
#[derive(Parser)]
#[command(name = "vguide", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode; writes episode_<joint>.csv, steps.csv and metrics.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides `episode.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit nonzero when any joint leaves its tube.
        #[arg(long)]
        strict: bool,
    },
    /// Sweep assistance factors, user models and seeds; writes sweep_rows.csv
    /// and sweep_cells.csv and prints the trend checks.
    ///
    /// VG_THREADS caps the number of worker threads.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Base seed; repetition r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        /// Assistance factors, e.g. `0,0.25,0.5`; overrides `sweep.xi`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        xi: Option<Vec<f64>>,
        /// Also write every episode's per-tick logs under logs/.
        #[arg(long)]
        full_logs: bool,
        /// Exit nonzero when any episode fails.
        #[arg(long)]
        strict: bool,
        #[arg(long, env = "VG_THREADS", hide = true)]
        threads: Option<usize>,
    },
    /// Write the tube geometry of each joint over one step to shapes_<joint>.csv.
    Shapes {
        #[command(flatten)]
        common: Common,
    },
    /// Run fast invariant checks.
    Selftest,
}

fn dispatch(cmd: Command) -> Result<Status, CliError> {
    let mut stdout = std::io::stdout().lock();
    match cmd {
        Command::Run { common, seed, strict } => cmd_run(
            parse_scenario(&common.scenario)?,
            &RunOptions {
                out: common.out,
                seed,
                strict,
            },
            &mut stdout,
        ),
        Command::Sweep {
            common,
            seed,
            xi,
            full_logs,
            strict,
            threads,
        } => cmd_sweep(
            parse_scenario(&common.scenario)?,
            &SweepOptions {
                out: common.out,
                seed,
                xi,
                full_logs,
                strict,
                threads,
            },
            &mut stdout,
        ),
        Command::Shapes { common } => cmd_shapes(parse_scenario(&common.scenario)?, &common.out, &mut stdout),
        Command::Selftest => Ok(if run_selftest(&mut stdout) { Status::Ok } else { Status::Failed }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
