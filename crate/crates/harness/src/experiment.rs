//! Single runs and parallel sweeps.

use std::path::{Path, PathBuf};

use gbpm::drivers::run;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SweepPoint};
use crate::error::{HarnessError, Result};
use crate::persist::{persist_run, write_snapshot, RunSummary};

pub const ENV_OUTPUT_DIR: &str = "GBPM_OUTPUT_DIR";
pub const ENV_WORKERS: &str = "GBPM_WORKERS";

/// Output directory: CLI flag, then environment, then config.
pub fn resolve_output_dir(cli: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    match std::env::var_os(ENV_OUTPUT_DIR) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.output.dir.clone(),
    }
}

/// Worker count: CLI flag, then environment, then the number of CPUs.
pub fn resolve_workers(cli: Option<usize>) -> Result<usize> {
    if let Some(w) = cli {
        return if w == 0 { Err(HarnessError::config("--workers", "must be >= 1")) } else { Ok(w) };
    }
    match std::env::var(ENV_WORKERS) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(HarnessError::config(ENV_WORKERS, format!("expected a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Runs one configuration into `dir`. The config snapshot is written before
/// the run starts. A failed run still persists its partial trace, then
/// returns the error.
pub fn run_single(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    write_snapshot(cfg, dir)?;
    let rc = cfg.to_run_config()?;
    match run(&rc) {
        Ok(record) => persist_run(cfg, &record, dir, None),
        Err(e) => {
            if let Some(partial) = &e.partial {
                persist_run(cfg, partial, dir, Some(e.cause.to_string()))?;
            }
            Err(e.into())
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepEntry {
    pub dir: String,
    pub point: u64,
    pub seed_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub runs: Vec<SweepEntry>,
}

impl SweepSummary {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Runs every sweep point on a pool of `workers` threads. Each run writes to
/// `root/p{point}-s{seed}`; `root/sweep_summary.json` lists them in sweep
/// order regardless of completion order. Individual failures are recorded,
/// not propagated.
pub fn run_sweep(cfg: &ExperimentConfig, root: &Path, workers: usize) -> Result<SweepSummary> {
    cfg.validate()?;
    let points: Vec<SweepPoint> = cfg.expand();
    for p in &points {
        p.config.validate()?;
    }
    std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::config("workers", e.to_string()))?;
    let runs: Vec<SweepEntry> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let name = p.dir_name();
                let res = run_single(&p.config, &root.join(&name));
                SweepEntry {
                    dir: name,
                    point: p.point,
                    seed_index: p.seed_index,
                    error: res.as_ref().err().map(|e| e.to_string()),
                    summary: res.ok(),
                }
            })
            .collect()
    });
    let summary = SweepSummary { config_hash: cfg.hash()?, runs };
    let path = root.join("sweep_summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
    Ok(summary)
}
