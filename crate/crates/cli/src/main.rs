use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use screenlearn::bench::{self, RunConfig, WORKERS_ENV};
use screenlearn::Error;

#[derive(Parser)]
#[command(name = "screenlearn", version, about = "Screened Super Learner simulation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// INI-style run configuration
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (defaults to the config value)
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Override a config key, e.g. `--set run.replicates=5` (repeatable)
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark sweep and write one row per replicate and arm
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Results CSV (defaults to run.output)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate best-possible performance for every design cell
    Oracle {
        #[command(flatten)]
        run: RunArgs,
        /// Oracle CSV (defaults to run.oracle_output)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a results CSV into per-cell means and standard errors
    PlotData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(run: &RunArgs) -> screenlearn::Result<RunConfig> {
    let mut config = RunConfig::from_file(&run.config)?;
    for o in &run.overrides {
        config.apply_override(o)?;
    }
    if let Some(w) = run.workers {
        config.workers = w;
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: Cli) -> screenlearn::Result<()> {
    match cli.command {
        Command::Simulate { run, out } => {
            let config = load(&run)?;
            let out = out.unwrap_or_else(|| config.output.clone());
            log::info!(
                "{} cells x {} arms x {} replicates, {} worker(s)",
                config.scenarios().len(),
                config.estimators.len(),
                config.replicates,
                config.workers
            );
            let records = bench::run_benchmark(&config)?;
            bench::write_records(&out, &records)?;
            let failed = records.iter().filter(|r| !r.value.is_finite()).count();
            if failed > 0 {
                log::warn!("{failed} of {} records failed; see the error column", records.len());
            }
            eprintln!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Oracle { run, out } => {
            let config = load(&run)?;
            let out = out.unwrap_or_else(|| config.oracle_output.clone());
            let rows = bench::compute_oracles(&config)?;
            bench::write_oracles(&out, &rows)?;
            eprintln!("wrote {} oracle rows to {}", rows.len(), out.display());
        }
        Command::PlotData { input, out } => {
            let records = bench::read_records(&input)?;
            let rows = bench::aggregate_plot_data(&records)?;
            bench::write_summary(&out, &rows)?;
            eprintln!("wrote {} summary rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
