use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cylspectra_cli::{resolve_threads, run_config, CliError, Experiment};

#[derive(Parser, Debug)]
#[command(
    name = "cylspectra",
    version,
    about = "Eigenvalue experiments on long cylinders"
)]
struct Args {
    #[arg(value_enum)]
    experiment: Experiment,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Parent of the run directory; overrides `output_dir` in the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads (falls back to CYLSPECTRA_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: &Args) -> Result<(), CliError> {
    let threads = resolve_threads(args.threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    let manifest =
        pool.install(|| run_config(args.experiment, &args.config, args.output_dir.as_deref()))?;
    println!("{}", manifest.output_dir.display());
    if !manifest.all_converged {
        let flagged: Vec<&str> = manifest
            .convergence
            .iter()
            .filter(|f| !f.converged)
            .map(|f| f.label.as_str())
            .collect();
        eprintln!("warning: not converged: {}", flagged.join(", "));
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
