use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beables_cli::config::RunConfig;
use beables_cli::engine::{execute, RunOutcome};

/// Exit codes: 0 all checks pass, 1 check failure, 2 configuration or I/O
/// error, 3 physics abort (node visit or step floor).
#[derive(Parser)]
#[command(name = "beables", version, about = "Beable dynamics laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the sector basis and Hamiltonian spectrum as JSON.
    Dump {
        /// Path to the config file (lattice section is used).
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Execute a run described by a key-value config file.
    Run {
        /// Path to the config file.
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the ensemble size.
        #[arg(long)]
        ensemble_size: Option<usize>,
        /// Override the checkpoint times (comma separated).
        #[arg(long)]
        checkpoints: Option<String>,
        /// Override the engine.
        #[arg(long)]
        engine: Option<String>,
    },
}

/// Thread count for parallel ensembles; unset means rayon's default.
const THREADS_ENV: &str = "BEABLES_THREADS";

fn init_threads() -> Result<(), String> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .parse()
            .map_err(|e| format!("{THREADS_ENV}={value}: {e}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    Ok(())
}

fn run() -> Result<ExitCode, (u8, String)> {
    let cli = Cli::parse();
    init_threads().map_err(|e| (2, e))?;
    match cli.command {
        Command::Dump { config, out_dir } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| (2, format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = RunConfig::parse(&text).map_err(|e| (2, e))?;
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            }
            let names = beables_cli::dump::dump(&cfg).map_err(|e| (2, e))?;
            for name in names {
                println!("wrote {}", cfg.out_dir.join(name).display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            seed,
            out_dir,
            ensemble_size,
            checkpoints,
            engine,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| (2, format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = RunConfig::parse(&text).map_err(|e| (2, e))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            }
            if let Some(n) = ensemble_size {
                cfg.ensemble_size = n;
            }
            if let Some(list) = checkpoints {
                cfg.checkpoints = list
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse::<f64>().map_err(|e| (2, format!("--checkpoints: {e}"))))
                    .collect::<Result<Vec<f64>, _>>()?;
            }
            if let Some(name) = engine {
                cfg.engine = name.parse().map_err(|e| (2, e))?;
            }
            cfg.validate().map_err(|e| (2, e))?;

            match execute(&cfg).map_err(|e| (2, e))? {
                RunOutcome::Completed(report) => {
                    for line in report.summary_lines() {
                        println!("{line}");
                    }
                    println!(
                        "run {} in {:.2?} -> {}",
                        if report.passed { "passed" } else { "FAILED" },
                        report.timing,
                        cfg.out_dir.display()
                    );
                    Ok(if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    })
                }
                RunOutcome::Aborted { report, diagnostic } => {
                    println!("physics abort: {diagnostic}");
                    println!("partial report in {}", cfg.out_dir.display());
                    let _ = report;
                    Ok(ExitCode::from(3))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
