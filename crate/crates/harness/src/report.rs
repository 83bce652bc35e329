//! Aggregation of persisted run summaries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::persist::{read_summary, RunSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Sample statistics of the finite values; `std` uses `n - 1`.
    pub fn of(values: &[f64]) -> Stats {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Stats::default();
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        let var = if n > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Stats { n, mean, median, std: var.sqrt(), min: v[0], max: v[n - 1] }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub algorithm: String,
    pub regularizer: String,
    /// `"inf"` or the shortest decimal form.
    pub eta: String,
    pub horizon: u64,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupReport {
    #[serde(flatten)]
    pub key: GroupKey,
    pub runs: usize,
    pub metrics: BTreeMap<String, Stats>,
}

pub const METRICS: [&str; 6] = ["mbr", "abr", "mn", "an", "o2b_gap", "final_gap"];

fn metric(s: &RunSummary, name: &str) -> f64 {
    let opt = |x: Option<f64>| x.unwrap_or(f64::NAN);
    match name {
        "mbr" => s.regrets.mbr,
        "abr" => s.regrets.abr,
        "mn" => s.regrets.mn,
        "an" => s.regrets.an,
        "o2b_gap" => opt(s.o2b_gap),
        "final_gap" => opt(s.final_gap),
        _ => f64::NAN,
    }
}

/// Every `summary.json` under `root`, in sorted path order.
pub fn collect_summaries(root: &Path) -> Result<Vec<(PathBuf, RunSummary)>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| HarnessError::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "summary.json") {
                found.push(path);
            }
        }
    }
    found.sort();
    found.into_iter().map(|p| read_summary(&p).map(|s| (p, s))).collect()
}

pub fn aggregate(summaries: &[RunSummary]) -> Vec<GroupReport> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        let key = GroupKey {
            algorithm: s.algorithm.clone(),
            regularizer: s.regularizer.clone(),
            eta: s.eta.map(|e| e.to_string()).unwrap_or_else(|| "inf".into()),
            horizon: s.horizon,
            dim: s.dim,
        };
        groups.entry(key).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(key, runs)| {
            let metrics = METRICS
                .iter()
                .map(|m| {
                    let vals: Vec<f64> = runs.iter().map(|s| metric(s, m)).collect();
                    (m.to_string(), Stats::of(&vals))
                })
                .collect();
            GroupReport { key, runs: runs.len(), metrics }
        })
        .collect()
}

pub fn render(groups: &[GroupReport], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(groups).map_err(|e| HarnessError::Serialize(e.to_string()))
        }
        ReportFormat::Csv => {
            let mut out = String::from("algorithm,regularizer,eta,horizon,dim,runs,metric,n,mean,median,std,min,max\n");
            for g in groups {
                for (m, s) in &g.metrics {
                    let k = &g.key;
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{m},{},{:e},{:e},{:e},{:e},{:e}\n",
                        k.algorithm, k.regularizer, k.eta, k.horizon, k.dim, g.runs, s.n, s.mean, s.median, s.std, s.min, s.max
                    ));
                }
            }
            Ok(out)
        }
        ReportFormat::Markdown => {
            let mut out = String::from("| algorithm | regularizer | eta | T | d | runs |");
            for m in METRICS {
                out.push_str(&format!(" {m} (median) |"));
            }
            out.push_str("\n|---|---|---|---|---|---|");
            out.push_str(&"---|".repeat(METRICS.len()));
            out.push('\n');
            for g in groups {
                let k = &g.key;
                out.push_str(&format!("| {} | {} | {} | {} | {} | {} |", k.algorithm, k.regularizer, k.eta, k.horizon, k.dim, g.runs));
                for m in METRICS {
                    let s = g.metrics[m];
                    if s.n == 0 {
                        out.push_str(" - |");
                    } else {
                        out.push_str(&format!(" {:.4e} |", s.median));
                    }
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}
