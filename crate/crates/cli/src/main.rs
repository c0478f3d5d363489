use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use msflab::config::{ExperimentConfig, Preset};
use msflab::run::{run, RunOptions, Subcommand, EXIT_FAILED};

/// Master stability functions and synchronisation probes for coupled impact
/// oscillators.
#[derive(Parser, Debug)]
#[command(name = "msflab", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,

    /// TOML configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory [default: the config's output.directory, else ./out].
    #[arg(long, env = "MSFLAB_OUT")]
    out: Option<PathBuf>,

    /// Oscillator parameter preset, overriding the config's `preset` key.
    #[arg(long, value_enum)]
    preset: Option<Preset>,

    /// Worker threads for grid computations [default: available parallelism].
    #[arg(long)]
    jobs: Option<usize>,

    /// Write SVG figures next to the CSV files.
    #[arg(long)]
    plot: bool,
}

fn execute(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if cli.preset.is_some() {
        cfg.preset = cli.preset;
    }
    let out_dir = cli
        .out
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let opts = RunOptions { out_dir, plot: cli.plot };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    let report = pool.install(|| run(cli.subcommand, &cfg, &opts))?;

    for note in &report.notes {
        println!("{note}");
    }
    for file in &report.files {
        println!("wrote {}", file.display());
    }
    if !report.failures.is_empty() {
        eprintln!("{} point(s) failed:", report.failures.len());
        for f in &report.failures {
            eprintln!("  {f}");
        }
    }
    if report.unconverged > 0 {
        eprintln!("warning: {} exponent(s) did not converge", report.unconverged);
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILED as u8)
        }
    }
}
