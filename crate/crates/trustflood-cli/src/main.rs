//! Command-line front end: validate fixtures, run scenarios, sweep
//! parameters.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime
//! failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use manifest::LoadedManifest;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "trustflood",
    about = "Trust-gated volunteer-search simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Manifest naming the fixtures and parameters.
    #[arg(long, short)]
    manifest: PathBuf,
    /// Directory relative fixture paths resolve against (also settable via
    /// TRUSTFLOOD_FIXTURES; defaults to the manifest's directory).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Suppress the per-run summary.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the manifest's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the manifest's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and cross-check every fixture the manifest names.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Execute the scenario and write trace, metrics and ledgers.
    Run {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run the scenario once per sweep grid point.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version are not errors.
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match cli.command {
        Command::Validate { common } => {
            let loaded = match load(&common) {
                Ok(l) => l,
                Err(code) => return code,
            };
            let report = commands::validate(&loaded);
            for line in &report.lines {
                println!("{line}");
            }
            if report.ok() {
                println!("all checks passed");
                ExitCode::SUCCESS
            } else {
                println!("{} check(s) failed", report.failures);
                ExitCode::from(EXIT_VALIDATION)
            }
        }
        Command::Run { args } => dispatch(args, commands::run),
        Command::Sweep { args } => dispatch(args, commands::sweep),
    }
}

fn load(common: &CommonArgs) -> Result<LoadedManifest, ExitCode> {
    LoadedManifest::load(&common.manifest, common.fixtures.as_deref()).map_err(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn dispatch(
    args: RunArgs,
    command: fn(&LoadedManifest, &commands::RunOptions) -> anyhow::Result<Vec<String>>,
) -> ExitCode {
    let loaded = match load(&args.common) {
        Ok(l) => l,
        Err(code) => return code,
    };

    // Runs only start on fixtures that fully validate.
    let report = commands::validate(&loaded);
    if !report.ok() {
        for line in report.lines.iter().filter(|l| l.starts_with("FAIL")) {
            eprintln!("{line}");
        }
        return ExitCode::from(EXIT_VALIDATION);
    }

    let options = commands::RunOptions {
        seed: args.seed,
        out_dir: args.out_dir,
        quiet: args.common.quiet,
    };
    match command(&loaded, &options) {
        Ok(summary) => {
            if !options.quiet {
                for line in summary {
                    println!("{line}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
