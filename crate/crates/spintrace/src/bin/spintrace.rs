use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Semiclassical trace formulas for coupled spin chains: run one configured
/// task and write deterministic CSV/JSON artifacts.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// TOML run configuration (model, task, numeric, output blocks).
    #[arg(long)]
    config: PathBuf,
    /// Directory for all output artifacts.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override the RNG seed from the numeric block.
    #[arg(long)]
    seed: Option<u64>,
    /// Bound on worker-thread parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = spintrace::cli::run(&args.config, &args.out_dir, args.seed, args.threads);
    ExitCode::from(code as u8)
}
