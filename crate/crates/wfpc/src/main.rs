use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wfpc::commands::{self, Overrides, Prepared};
use wfpc::config::MethodName;
use wfpc::{parse_scenario, Error, RayonExecutor};

/// Weak-field phase control simulator.
#[derive(Debug, Parser)]
#[command(name = "wfpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for mask sweeps and scan cells.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides `protocol.method`.
    #[arg(long, global = true, value_enum)]
    method: Option<MethodName>,
    /// Rerun at half the time step and fail if p(T) moves.
    #[arg(long, global = true)]
    verify_grid: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Propagate every mask of the phase family and write trajectories.
    Simulate,
    /// Run the two-experiment correlation witness.
    Witness,
    /// Scan two-time correlators against the regression formula.
    Qrf,
    /// Evaluate the three no-go conditions.
    Nogo,
    /// Summarize the artifacts in an output directory.
    Report,
}

fn run(cli: Cli) -> Result<String, Error> {
    if let Command::Report = cli.command {
        let dir = match (&cli.out, &cli.config) {
            (Some(dir), _) => dir.clone(),
            (None, Some(config)) => PathBuf::from(parse_scenario(config)?.output.dir),
            (None, None) => return Err(Error::Usage("report needs --out or --config".into())),
        };
        return commands::cmd_report(&dir);
    }
    let config = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Usage("--config is required".into()))?;
    let scenario = parse_scenario(config)?;
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        method: cli.method,
        verify_grid: cli.verify_grid,
    };
    let base_dir = config.parent().unwrap_or(Path::new("."));
    let prep = Prepared::new(scenario, &overrides, base_dir)?;
    let exec = RayonExecutor::new(cli.workers)?;
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&prep, &exec),
        Command::Witness => commands::cmd_witness(&prep, &exec),
        Command::Qrf => commands::cmd_qrf(&prep, &exec),
        Command::Nogo => commands::cmd_nogo(&prep),
        Command::Report => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
