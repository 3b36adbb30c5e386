use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rbdsde_cli::config::{Mode, RunConfig};
use rbdsde_cli::run::{run_experiment, Overrides};

/// Reflected BDSDE lattice solver.
#[derive(Debug, Parser)]
#[command(name = "rbdsde", version)]
struct Args {
    mode: Mode,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; beats `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight exponent; beats `beta`.
    #[arg(long)]
    beta: Option<f64>,
    /// Splits every step into this many substeps.
    #[arg(long)]
    refine: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let overrides = Overrides { mode: Some(args.mode), out: args.out, beta: args.beta, refine: args.refine };
    let result = RunConfig::from_path(&args.config).and_then(|c| run_experiment(c, &overrides));
    match result {
        Ok(outcome) => {
            for r in outcome.reports.iter().filter(|r| !r.passed) {
                eprintln!("FAILED {}: violation {:e} > tolerance {:e}", r.name, r.max_violation, r.tolerance);
            }
            let passed = outcome.reports.iter().filter(|r| r.passed).count();
            println!("{passed}/{} checks passed", outcome.reports.len());
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
