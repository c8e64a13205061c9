use std::path::PathBuf;
use std::process::ExitCode;

use adk_cli::config::Format;
use adk_cli::{run, RunConfig};
use clap::Parser;

/// Solvers for stochastic optimal advertising problems.
#[derive(Parser, Debug)]
#[command(name = "adk", version)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated formats; overrides `formats`.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let default_level = if args.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADK_LOG", default_level))
        .init();

    let result = RunConfig::load(&args.config).and_then(|mut cfg| {
        if let Some(dir) = args.output {
            cfg.output_dir = dir;
        }
        if let Some(formats) = args.format {
            cfg.formats = formats;
        }
        run(&cfg, args.quiet)
    });
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
