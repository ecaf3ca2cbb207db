use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hodge_bands_cli::{run_bands, run_converge, run_gaps, run_limit, run_selfcheck_command, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "hodge-bands", version, about = "Band structure of the Hodge Laplacian on warped handle manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Override a config field, e.g. `--set lambda_max=5` or `--set tolerances.oracle_n=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Bands and gaps for every (p, eps): bands.csv, gaps.csv, summary.json.
    Bands(Common),
    /// Limit spectra for every p: limit.csv, summary.json.
    Limit(Common),
    /// Convergence of the bands to the limit spectrum: convergence.csv, summary.json.
    Converge(Common),
    /// Gaps only: gaps.csv, summary.json.
    Gaps(Common),
    /// Invariant suite; exit code 3 on failure.
    Selfcheck(Common),
}

fn run(cli: Cli) -> CliResult<()> {
    let (common, cmd) = match &cli.command {
        Command::Bands(c) => (c, "bands"),
        Command::Limit(c) => (c, "limit"),
        Command::Converge(c) => (c, "converge"),
        Command::Gaps(c) => (c, "gaps"),
        Command::Selfcheck(c) => (c, "selfcheck"),
    };
    let cfg = RunConfig::load(&common.config, &common.overrides)?;
    log::info!("running {cmd} into {}", cfg.output.display());
    match cmd {
        "bands" => run_bands(&cfg).map(|_| ()),
        "limit" => run_limit(&cfg).map(|_| ()),
        "converge" => run_converge(&cfg).map(|_| ()),
        "gaps" => run_gaps(&cfg).map(|_| ()),
        _ => {
            let (_, report) = run_selfcheck_command(&cfg)?;
            for c in &report.checks {
                println!("{:<32} {}  {:.3e} <= {:.1e}", c.name, if c.passed { "pass" } else { "FAIL" }, c.value, c.tol);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
