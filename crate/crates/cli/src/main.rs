use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pathgreeks_cli::{CliError, ExperimentConfig};

/// Monte Carlo Greeks for path-dependent derivatives, driven by TOML experiment files.
#[derive(Parser)]
#[command(name = "pathgreeks", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides `output.dir`
    #[arg(long)]
    out: Option<PathBuf>,

    /// Replace `mc.seed`
    #[arg(long)]
    seed_override: Option<u64>,

    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Price and Greeks; writes results, convergence and Vega surface CSVs
    Run(Common),
    /// Label the path dependence of the contract's price functional
    Classify(Common),
    /// Write simulated paths, Brownian increments and tangent process
    DumpPaths(Common),
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (Command::Run(c) | Command::Classify(c) | Command::DumpPaths(c)) = &cli.command;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {}", e)))?;
    }
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed_override {
        cfg.mc.seed = seed;
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());

    match &cli.command {
        Command::Run(_) => {
            let summary = pathgreeks_cli::run(&cfg, &out)?;
            print!("{}", summary.table());
        }
        Command::Classify(_) => {
            let class = pathgreeks_cli::classify(&cfg, &out)?;
            for e in &class.evidence {
                println!("t = {:<8} |bracket| = {:.6e}", e.time, e.magnitude);
            }
            println!("{}", class.kind.label());
        }
        Command::DumpPaths(_) => {
            let n = pathgreeks_cli::dump_paths(&cfg, &out)?;
            println!("wrote {} paths", n);
        }
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
