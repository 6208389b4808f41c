use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sqg_cli::commands::{self, CliError, Exit};
use sqg_cli::config::ExperimentConfig;

/// Thread count for the data-parallel kernels.
const THREADS_ENV: &str = "SQG_THREADS";

#[derive(Parser)]
#[command(name = "sqg", version, about = "Super-critical SQG simulator and regularity certificates")]
struct Cli {
    /// Key-value configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for generated initial data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Check tolerance (breakthrough slack for simulate, marginal tolerance for kernel-check).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a monitored simulation.
    Simulate {
        /// Continue from a snapshot written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Check the dominance inequality for the configured modulus.
    Certify,
    /// Validate the kernel representation of the fractional Laplacian.
    KernelCheck,
    /// Scan the (delta, gamma) plane for admissible moduli.
    MocScan,
    /// Summarize the tables in a directory.
    Report {
        /// Directory to scan; defaults to the output directory.
        dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if let Some(tol) = cli.tol {
        cfg.tol = Some(tol);
    }
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| CliError::usage(format!("{THREADS_ENV}={raw} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))
}

fn execute(cli: &Cli) -> Result<Exit, CliError> {
    configure_threads()?;
    let cfg = load_config(cli)?;
    let mut out = std::io::stdout().lock();
    match &cli.command {
        Command::Simulate { resume } => commands::simulate(&cfg, resume.as_deref(), &mut out),
        Command::Certify => commands::certify(&cfg, &mut out),
        Command::KernelCheck => commands::kernel_check(&cfg, &mut out),
        Command::MocScan => commands::moc_scan(&cfg, &mut out),
        Command::Report { dir } => commands::report(dir.as_deref().unwrap_or(&cfg.output), &mut out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Usage as u8 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}
