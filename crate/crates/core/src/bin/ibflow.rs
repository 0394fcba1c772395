//! Command-line front end: `ibflow <suite> --config <path>` with optional
//! seed / replica / output-directory overrides.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 configuration
//! error, 3 numerical or runtime error.

use std::process::ExitCode;

use clap::Parser;

use ibflow::config::parse_config;
use ibflow::harness::{run_suite, Suite};
use ibflow::Error;

#[derive(Parser)]
#[command(
    name = "ibflow",
    version,
    about = "Monte Carlo and analytic laboratory for planar isotropic Brownian flows"
)]
struct Cli {
    /// Suite to run: analyze, radial, lyapunov-fn, sweep, simulate, shape, verify
    suite: String,

    /// Path to a JSON experiment configuration
    #[arg(long)]
    config: String,

    /// Override the master seed from the configuration
    #[arg(long)]
    seed: Option<u64>,

    /// Override the replica count (ignored by `verify`, which runs a
    /// fixed battery)
    #[arg(long)]
    replicas: Option<usize>,

    /// Override the output directory; created if absent
    #[arg(long)]
    out: Option<String>,
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let suite = Suite::parse(&cli.suite)?;
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| Error::Config(format!("cannot read '{}': {e}", cli.config)))?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(replicas) = cli.replicas {
        config.replicas.0 = replicas;
        if replicas < 1 {
            return Err(Error::Config("replicas must be >= 1".into()));
        }
    }
    if let Some(out) = &cli.out {
        config.output.out_dir = Some(out.clone());
    }
    if let Ok(workers) = std::env::var("IBFLOW_WORKERS") {
        let n: usize = workers
            .parse()
            .map_err(|_| Error::Config(format!("IBFLOW_WORKERS must be a positive integer, got '{workers}'")))?;
        if n < 1 {
            return Err(Error::Config("IBFLOW_WORKERS must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let record = run_suite(&config, suite)?;
    for outcome in &record.outcomes {
        println!(
            "{} {:<32} {}",
            if outcome.passed { "pass" } else { "FAIL" },
            outcome.name,
            outcome.detail
        );
    }
    println!(
        "{}: {} in {:.1} s (seed {}, config {})",
        record.suite,
        if record.passed { "passed" } else { "FAILED" },
        record.wall_seconds,
        record.master_seed,
        record.config_digest
    );
    Ok(record.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) => {
            eprintln!("ibflow: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("ibflow: {e}");
            ExitCode::from(3)
        }
    }
}
