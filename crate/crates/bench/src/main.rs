use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mmd_bench::config::{Experiment, ExperimentConfig, Flux, Mean};
use mmd_bench::{run, BenchError, Output};

/// Runs one experiment and writes its CSV tables to the output directory.
#[derive(Debug, Parser)]
#[command(name = "mmd-bench", version)]
struct Cli {
    experiment: Experiment,
    /// JSON file whose keys override the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Lattice sizes, e.g. `16,32,64`.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    flux: Option<Flux>,
    #[arg(long)]
    mean: Option<Mean>,
    /// Also write legacy-VTK solution files.
    #[arg(long)]
    vtk: bool,
}

fn configure(cli: &Cli) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(cli.experiment, path)?,
        None => ExperimentConfig::defaults_for(cli.experiment),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = &cli.sizes {
        cfg.sizes = s.clone();
    }
    if cli.flux.is_some() {
        cfg.flux = cli.flux;
    }
    if let Some(m) = cli.mean {
        cfg.mean = m;
    }
    cfg.vtk |= cli.vtk;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = configure(&cli).and_then(|cfg| {
        let out = Output::to_dir(&cli.out, cfg.vtk)?;
        run(&cfg, &out)
    });
    match result {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.failures {
                eprintln!("solver failure: {f}");
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
