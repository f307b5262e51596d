use std::path::PathBuf;

use clap::{Parser, Subcommand};

use ucwfp_cli::{run_axioms, run_experiment, run_suite, run_verify_map};

/// Fixed-point experiment driver: runs, audits, and space/map checks.
#[derive(Parser)]
#[command(name = "ucwfp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario config and write its trace, summary, and verdicts.
    Run {
        /// Scenario config (JSON, // and /* */ comments allowed).
        config: PathBuf,
    },
    /// Run every scenario config in a directory and aggregate the results.
    Suite {
        /// Directory holding *.json scenario configs.
        dir: PathBuf,
    },
    /// Check the space axioms and convexity properties for a space config.
    Axioms {
        /// Space config (JSON).
        space_config: PathBuf,
    },
    /// Check a map's declared bounds and fixed points on a space.
    VerifyMap {
        /// Space config (JSON).
        space_config: PathBuf,
        /// Map config (JSON).
        map_config: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => run_experiment(&config).exit,
        Command::Suite { dir } => run_suite(&dir),
        Command::Axioms { space_config } => run_axioms(&space_config),
        Command::VerifyMap {
            space_config,
            map_config,
        } => run_verify_map(&space_config, &map_config),
    };
    std::process::exit(code);
}
