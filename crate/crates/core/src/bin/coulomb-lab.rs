//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use coulomb_gas::experiment::{run, Command, ExperimentSpec};
use coulomb_gas::io::PointFormat;
use coulomb_gas::Error;

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "COULOMB_LAB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "coulomb-lab", version, about = "Two-dimensional Coulomb gas experiments")]
struct Cli {
    /// sample, energy, locallaw, screen_demo, deltas or oracle; overrides the config's command.
    command: Option<String>,
    /// TOML experiment spec.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed, overriding the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Point file format: csv or bin.
    #[arg(long)]
    format: Option<String>,
}

fn resolve(cli: &Cli) -> Result<ExperimentSpec, Error> {
    let mut spec = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
            ExperimentSpec::from_toml(&text)?
        }
        None => {
            let c = cli.command.as_deref().ok_or_else(|| Error::Validation("give a command or --config".into()))?;
            ExperimentSpec::new(c.parse::<Command>()?)
        }
    };
    if let Some(c) = &cli.command {
        spec.command = c.parse()?;
    }
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(o) = &cli.out {
        spec.io.out = o.clone();
    }
    if let Some(f) = &cli.format {
        spec.io.format = f.parse::<PointFormat>()?;
    }
    Ok(spec)
}

fn init_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.parse().map_err(|_| Error::Validation(format!("{THREADS_VAR} must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Validation(format!("{THREADS_VAR} must be positive")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Validation(e.to_string()))?;
    }
    Ok(())
}

fn fail(e: &Error) -> ExitCode {
    let kind = if e.is_validation() { "validation" } else { "numerical" };
    eprintln!("{}", serde_json::json!({ "error": kind, "message": e.to_string() }));
    ExitCode::from(if e.is_validation() { 2 } else { 3 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        return fail(&e);
    }
    let spec = match resolve(&cli) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    match run(&spec) {
        Ok(out) => {
            print!("{}", out.summary);
            println!("wrote {} file(s) to {}", out.files.len() + 2, out.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
