//! `parisi-lab`: runs one experiment described by a JSON configuration.

mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "parisi-lab", version, about = "Parisi functional laboratory")]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; falls back to the configuration, then `PARISI_LAB_OUT`, then `./parisi-lab-out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = config::parse(&text)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(w) = args.workers.or(cfg.workers) {
        if w == 0 {
            return Err(CliError::Config("at `workers`: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let out = args
        .out
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os("PARISI_LAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("parisi-lab-out"));
    let report = run::execute(&cfg, &text, &out)?;
    for l in &report.lines {
        println!("{l}");
    }
    println!(
        "wrote {} artifacts and manifest.json to {}",
        report.manifest.artifacts.len(),
        out.display()
    );
    if !report.failures.is_empty() {
        return Err(CliError::Assertion(report.failures.join(", ")));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("parisi-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
