use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use martin_cli::commands;
use martin_cli::config::{ExperimentConfig, Format, WalkConfig};
use martin_cli::error::{CliError, CliResult, EXIT_USAGE, EXIT_VERDICT};
use martin_cli::output::{meta_path, write_atomic, Metadata, Outcome};

#[derive(Parser, Debug)]
#[command(
    name = "martin",
    version,
    about = "Martin kernels, harmonic measures and conformal measures of random walks on groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads. Reports do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Report path. Timing metadata goes to `<out>.meta.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[arg(long, global = true)]
    tolerance: Option<f64>,

    /// Named walk, e.g. `srw-free:2`, `drift-z:0.7`, `wreath-walk:2,0.7,0.3`.
    #[arg(long, global = true)]
    walk: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Green function G(e, y) by series and linear solve.
    Green,
    /// Martin kernel values K(g, xi) at a boundary approximant.
    Martin,
    /// Harmonic measure estimate by path sampling.
    Harmonic,
    /// Spine scan of one approximant or of all ray candidates.
    SpineScan,
    /// Conformality battery, spine scan and classification.
    Conformal,
    /// The Phi curve of a measure.
    Phi,
    /// KMS residuals on random two-factor words.
    Kms,
    /// Product construction checks.
    Product,
    /// The acceptance battery.
    Suite,
}

fn resolve(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cli.format.is_some() {
        cfg.format = cli.format;
    }
    if cli.tolerance.is_some() {
        cfg.tolerance = cli.tolerance;
    }
    if let Some(w) = &cli.walk {
        cfg.walk = Some(WalkConfig::Named(w.clone()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(command: Command, cfg: &ExperimentConfig) -> CliResult<Outcome> {
    match command {
        Command::Green => commands::green(cfg),
        Command::Martin => commands::martin(cfg),
        Command::Harmonic => commands::harmonic(cfg),
        Command::SpineScan => commands::spine(cfg),
        Command::Conformal => commands::conformal(cfg),
        Command::Phi => commands::phi(cfg),
        Command::Kms => commands::kms(cfg),
        Command::Product => commands::product(cfg),
        Command::Suite => commands::suite(cfg),
    }
}

fn run(cli: &Cli) -> CliResult<bool> {
    let cfg = resolve(cli)?;
    let workers = cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| CliError::Pool(e.to_string()))?;
    let start = Instant::now();
    let outcome = pool.install(|| dispatch(cli.command, &cfg))?;
    let elapsed = start.elapsed().as_secs_f64();
    let text = outcome.render(cfg.format.unwrap_or_default());
    match &cfg.out {
        Some(path) => {
            write_atomic(path, &text)?;
            let meta = Metadata {
                command: &outcome.command,
                version: env!("CARGO_PKG_VERSION"),
                workers,
                elapsed_seconds: elapsed,
                unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
                timings: &outcome.timings,
            };
            let mut meta_text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
            meta_text.push('\n');
            write_atomic(&meta_path(path), &meta_text)?;
            eprintln!("{}: {}", outcome.command, outcome.summary);
        }
        None => print!("{text}"),
    }
    if !outcome.passed {
        eprintln!("{}: check failed: {}", outcome.command, outcome.summary);
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERDICT as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
