use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gaugekit::cache::{cache_clear, cache_stat};
use gaugekit::config::{parse_config, Scenario};
use gaugekit::report::{emit_reports, ReportFormat};
use gaugekit::run::{run_scenario, run_sweep, RunContext, RunRecord};
use gaugekit::Error;

#[derive(Parser)]
#[command(name = "gaugekit", version, about = "Gauge solves, solvability conditions and estimates for -Δu = qu")]
struct Cli {
    /// Scenario file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Comma-separated subset of csv,json.
    #[arg(long, global = true, default_value = "csv,json")]
    formats: String,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Kernel-matrix cache; matrices are always assembled when absent.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gauge and envelope solves, with the dense oracle when enabled.
    Solve,
    /// Trace constant, balayage, Carleson and BMO diagnostics.
    Conditions,
    /// Two-sided pointwise estimates with fitted constants.
    Estimates,
    /// Riccati residuals of log u and the point-mass counterexample.
    Riccati,
    /// Runs the configured stages once per value of one parameter.
    Sweep {
        /// lambda, a, gamma, radius, truncation_k, truncation_radius,
        /// n_radial, n_angular, boundary_n, resolution or seed.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Inspect or empty the matrix cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Clear,
    Stat,
}

fn only(mut s: Scenario, solve: bool, conditions: bool, estimates: bool, riccati: bool) -> Scenario {
    s.run.solve = solve;
    s.run.conditions = conditions;
    s.run.estimates = estimates;
    s.run.riccati = riccati;
    s
}

fn run(cli: Cli) -> Result<bool, Error> {
    if let Command::Cache { action } = &cli.command {
        let dir = cli.cache_dir.as_deref().ok_or_else(|| Error::Config("cache commands need --cache-dir".into()))?;
        match action {
            CacheAction::Clear => println!("removed {} cache files from {}", cache_clear(dir)?, dir.display()),
            CacheAction::Stat => {
                let st = cache_stat(dir)?;
                println!("{}: {} files, {} bytes", dir.display(), st.files, st.bytes);
            }
        }
        return Ok(true);
    }
    let formats = cli.formats.split(',').map(str::parse).collect::<Result<Vec<ReportFormat>, _>>()?;
    let mut scenario = match &cli.config {
        Some(p) => parse_config(p)?,
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    let ctx = RunContext { cache_dir: cli.cache_dir.clone() };
    let records: Vec<RunRecord> = match cli.command {
        Command::Solve => vec![run_scenario(&only(scenario, true, false, false, false), &ctx)],
        Command::Conditions => vec![run_scenario(&only(scenario, false, true, false, false), &ctx)],
        Command::Estimates => vec![run_scenario(&only(scenario, false, false, true, false), &ctx)],
        Command::Riccati => vec![run_scenario(&only(scenario, false, false, false, true), &ctx)],
        Command::Sweep { axis, values } => run_sweep(&scenario, &axis, &values, &ctx)?,
        Command::Cache { .. } => unreachable!(),
    };
    for r in &records {
        for e in &r.errors {
            eprintln!("{}: {} stage: {}", r.scenario.id, e.stage, e.message);
        }
    }
    for path in emit_reports(&records, &cli.out, &formats)? {
        println!("{}", path.display());
    }
    Ok(records.iter().all(RunRecord::complete))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
