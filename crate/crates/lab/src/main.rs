use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use width_sde_lab::{parse_config, run, LabError, Subcommand, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "width-sde", version, about = "Simulation and verification lab for the width SDE")]
struct Cli {
    /// `run` or the subcommand the configuration names.
    command: String,
    /// JSON configuration file.
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// Falls back to the config, then `WIDTH_SDE_WORKERS`.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn main_inner(cli: Cli) -> Result<i32, LabError> {
    let text = std::fs::read_to_string(&cli.config).map_err(|source| LabError::Io { path: cli.config.clone(), source })?;
    let mut cfg = parse_config(&text)?;
    if cli.command != "run" {
        let named = <Subcommand as clap::ValueEnum>::from_str(&cli.command, false)
            .map_err(|_| LabError::config(format!("unknown subcommand {:?}", cli.command)))?;
        if named != cfg.subcommand {
            return Err(LabError::config(format!("command {} does not match the configured subcommand {}", named.name(), cfg.subcommand.name())));
        }
    }
    if let Some(s) = cli.overrides.seed {
        cfg.seed = s;
    }
    if let Some(d) = cli.overrides.output_dir {
        cfg.output_dir = d;
    }
    let report = run(&cfg, cli.overrides.workers)?;
    println!("{}", serde_json::to_string_pretty(report.summary()).expect("summary serializes"));
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    // usage errors share the generic error code; 2 is reserved for failed claims
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_ERROR as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
