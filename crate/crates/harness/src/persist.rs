//! Trace CSV and run summary output.

use std::io::Write;
use std::path::Path;

use gbpm::drivers::{online_to_batch, regret_suite, PhaseTiming, RegretSuite, RoundRecord, RunRecord};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format};
use crate::error::{HarnessError, Result};

pub const TRACE_HEADER: &str = "t,dual_gap_max,dual_gap_min,cum_mbr,cum_abr,est_frob_err,est_op_err";

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else {
        String::new()
    }
}

/// Writes the header and one line per row. Non-finite values (no estimate
/// yet) become empty cells. Formatting is shortest round-trip, so equal
/// records give byte-identical files.
pub fn write_trace<'a, W: Write>(rows: impl IntoIterator<Item = &'a RoundRecord>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t,
            num(r.gap_max),
            num(r.gap_min),
            num(r.cum_mbr),
            num(r.cum_abr),
            num(r.est_frob_err),
            num(r.est_op_err)
        )?;
    }
    out.flush()
}

pub fn trace_string(record: &RunRecord) -> String {
    let mut buf = Vec::new();
    write_trace(record.trace_rows(), &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub algorithm: String,
    pub regularizer: String,
    /// `None` stands for `eta = inf`.
    pub eta: Option<f64>,
    pub horizon: u64,
    pub dim: usize,
    pub seed: u64,
    pub t0: Option<u64>,
    pub rounds: u64,
    pub regrets: RegretSuite,
    pub o2b_gap: Option<f64>,
    pub o2b_bound: Option<f64>,
    pub final_gap: Option<f64>,
    pub final_frob_err: Option<f64>,
    pub final_op_err: Option<f64>,
    pub clamp_events: u64,
    pub timing: PhaseTiming,
    /// Present when the run stopped early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunSummary {
    pub fn from_record(cfg: &ExperimentConfig, record: &RunRecord) -> Result<Self> {
        let regrets = regret_suite(record)?;
        let (o2b_gap, o2b_bound) = match online_to_batch(record) {
            Ok(o) => (finite(o.gap), finite(o.bound)),
            Err(_) => (None, None),
        };
        let last = record.rounds.last();
        Ok(RunSummary {
            config_hash: cfg.hash()?,
            algorithm: match record.algorithm {
                gbpm::drivers::Algorithm::Gs => "gs".into(),
                gbpm::drivers::Algorithm::Etc => "etc".into(),
            },
            regularizer: cfg.reg_kind()?.name(),
            eta: finite(cfg.regularizer.eta),
            horizon: record.horizon,
            dim: cfg.world.dim,
            seed: cfg.algorithm.seed,
            t0: record.t0,
            rounds: record.rounds_played(),
            regrets,
            o2b_gap,
            o2b_bound,
            final_gap: last.and_then(|r| finite(r.gap_max)),
            final_frob_err: last.and_then(|r| finite(r.est_frob_err)),
            final_op_err: last.and_then(|r| finite(r.est_op_err)),
            clamp_events: record.clamp_events,
            timing: record.timing.clone(),
            error: None,
        })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Writes `config.toml` into `dir`, creating it.
pub fn write_snapshot(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_file(&dir.join("config.toml"), cfg.to_toml()?.as_bytes())
}

/// Writes `trace.csv` and `summary.json` (per `output.formats`) into `dir`.
pub fn persist_run(cfg: &ExperimentConfig, record: &RunRecord, dir: &Path, error: Option<String>) -> Result<RunSummary> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut summary = RunSummary::from_record(cfg, record)?;
    summary.error = error;
    if cfg.output.formats.contains(&Format::Csv) {
        write_file(&dir.join("trace.csv"), trace_string(record).as_bytes())?;
    }
    if cfg.output.formats.contains(&Format::Json) {
        let json = serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Serialize(e.to_string()))?;
        write_file(&dir.join("summary.json"), json.as_bytes())?;
    }
    Ok(summary)
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| HarnessError::Serialize(format!("{}: {e}", path.display())))
}
