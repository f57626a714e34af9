use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stepgl_cli::config::{Command, Params, RunConfig};
use stepgl_cli::run::run;

/// Spectral thresholds, effective energies and Ginzburg–Landau minimizers
/// for step magnetic fields.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// Command to run; may instead come from the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// Flat TOML file of parameters; command-line values override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: Params,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match RunConfig::resolve(cli.command, cli.config.as_deref(), cli.params) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("usage error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(summary) => {
            for r in &summary.records {
                println!("{}", r.to_line());
            }
            if summary.failed() {
                eprintln!("one or more sub-runs failed; see {}", summary.records_path.display());
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
