use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gbpm::drivers::{choose_t0, t0_params, t0_raw, T0Mode};
use gbpm::env::generate_world;
use gbpm_harness::config::ExperimentConfig;
use gbpm_harness::experiment::{resolve_output_dir, resolve_workers, run_single, run_sweep};
use gbpm_harness::report::{aggregate, collect_summaries, render, ReportFormat};
use gbpm_harness::verify::run_checks;
use gbpm_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "gbpm", version, about = "Regularized online preference learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run {
        config: PathBuf,
        /// Output directory (overrides GBPM_OUTPUT_DIR and the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cartesian product in the config's [sweep] block.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (overrides GBPM_WORKERS).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the numeric inequality checks.
    Verify {
        #[arg(long)]
        quick: bool,
    },
    /// Print the exploration length for both schedules at given horizons.
    T0 {
        config: PathBuf,
        /// Horizons; defaults to the config's horizon.
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<u64>,
    },
    /// Aggregate the summaries found under a directory.
    Report {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: ReportFormat,
    },
}

fn json_line<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| HarnessError::Serialize(e.to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let dir = resolve_output_dir(out.as_deref(), &cfg);
            let summary = run_single(&cfg, &dir)?;
            println!("{}", json_line(&summary)?);
        }
        Command::Sweep { config, out, workers } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let dir = resolve_output_dir(out.as_deref(), &cfg);
            let summary = run_sweep(&cfg, &dir, resolve_workers(workers)?)?;
            println!(
                "{}",
                json_line(&serde_json::json!({
                    "runs": summary.runs.len(),
                    "failed": summary.failures(),
                    "dir": dir,
                }))?
            );
        }
        Command::Verify { quick } => {
            let outcome = run_checks(quick)?;
            for r in &outcome.reports {
                println!(
                    "{} {}: {} instances, {} violations, worst margin {:.3e}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.instances,
                    r.violations,
                    r.worst_margin
                );
            }
            outcome.into_result()?;
        }
        Command::T0 { config, horizons } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let rc = cfg.to_run_config()?;
            let world = generate_world(&rc.world)?;
            let p = t0_params(&rc, &world)?;
            let horizons = if horizons.is_empty() { vec![rc.horizon] } else { horizons };
            println!("horizon,t0_eta_aware,t0_eta_free,raw_eta_aware,raw_eta_free");
            for t in horizons {
                if t == 0 {
                    return Err(HarnessError::config("--horizons", "every horizon must be >= 1"));
                }
                println!(
                    "{t},{},{},{:e},{:e}",
                    choose_t0(t, T0Mode::EtaAware, &p),
                    choose_t0(t, T0Mode::EtaFree, &p),
                    t0_raw(t, T0Mode::EtaAware, &p),
                    t0_raw(t, T0Mode::EtaFree, &p)
                );
            }
        }
        Command::Report { dir, format } => {
            let summaries: Vec<_> = collect_summaries(&dir)?.into_iter().map(|(_, s)| s).collect();
            print!("{}", render(&aggregate(&summaries), format)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.category(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
