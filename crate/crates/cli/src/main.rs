//! Experiment CLI for the hybrid Nash-set-seeking library.
//!
//! Subcommands: `run <config>`, `sweep <config>`, `certify <config>`,
//! `compare <a.csv> <b.csv> --t <T> --j <J>`. The `HYBRID_NSS_THREADS`
//! environment variable caps the worker pool for sweeps and grid
//! certificates. Exit codes: 0 success (including measured divergence),
//! 2 config error, 3 internal numerical error.

mod config;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::runner::CliError;

#[derive(Parser)]
#[command(
    name = "hybrid-nss",
    version,
    about = "Hybrid momentum Nash-set-seeking experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run { config: PathBuf },
    /// Run the cartesian parameter sweep declared in the config.
    Sweep { config: PathBuf },
    /// Evaluate tuning certificates only (no simulation).
    Certify { config: PathBuf },
    /// (T, J, eps)-closeness of two trajectory CSVs.
    Compare {
        arc_a: PathBuf,
        arc_b: PathBuf,
        #[arg(long = "t")]
        t_max: f64,
        #[arg(long = "j")]
        j_max: u32,
    },
}

fn init_threads() {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("HYBRID_NSS_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build_global();
        }
    }
}

fn load(
    path: &PathBuf,
) -> Result<(String, toml::Value, config::ExperimentConfig, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let raw: toml::Value =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
    let cfg = config::parse_config(&text).map_err(CliError::Config)?;
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
    Ok((text, raw, cfg, hash))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let (_, _, cfg, hash) = load(&config)?;
            let dir = runner::out_dir_for(&cfg, &config);
            let summary = runner::run_experiment(&cfg, &dir, &hash)?;
            println!(
                "run complete: diverged={} jumps={} final_dist={} -> {}",
                summary.diverged,
                summary.jump_count,
                summary
                    .final_dist
                    .map(output::fmt_f64)
                    .unwrap_or_else(|| "n/a".into()),
                dir.display()
            );
            Ok(())
        }
        Command::Sweep { config } => {
            let (_, raw, cfg, hash) = load(&config)?;
            let root = runner::out_dir_for(&cfg, &config);
            std::fs::create_dir_all(&root)
                .map_err(|e| CliError::Internal(format!("creating {}: {e}", root.display())))?;
            let rows = runner::run_sweep(&raw, &cfg, &root, &hash)?;
            #[derive(serde::Serialize)]
            struct Row<'a> {
                run: usize,
                point: &'a [(String, f64)],
                summary: &'a runner::RunSummary,
            }
            let table: Vec<Row> = rows
                .iter()
                .map(|(i, point, summary)| Row { run: *i, point, summary })
                .collect();
            let json = serde_json::to_string_pretty(&table)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            std::fs::write(root.join("sweep_summary.json"), json + "\n")
                .map_err(|e| CliError::Internal(e.to_string()))?;
            for (i, point, summary) in &rows {
                println!(
                    "run_{i:03} {:?}: diverged={} final_dist={}",
                    point,
                    summary.diverged,
                    summary
                        .final_dist
                        .map(output::fmt_f64)
                        .unwrap_or_else(|| "n/a".into())
                );
            }
            Ok(())
        }
        Command::Certify { config } => {
            let (_, _, cfg, _) = load(&config)?;
            let report = runner::certify(&cfg)?;
            runner::print_certificates(&report);
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            let dir = runner::out_dir_for(&cfg, &config);
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::Internal(format!("creating {}: {e}", dir.display())))?;
            std::fs::write(dir.join("certificates.json"), json + "\n")
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(())
        }
        Command::Compare {
            arc_a,
            arc_b,
            t_max,
            j_max,
        } => {
            let eps = runner::compare(&arc_a, &arc_b, t_max, j_max)?;
            println!("closeness eps = {}", output::fmt_f64(eps));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
