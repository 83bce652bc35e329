//! TOML experiment configuration.

use std::path::PathBuf;

use gbpm::drivers::{Algorithm, ReferenceMode, RunConfig, T0Mode};
use gbpm::env::{FeatureMode, LinkKind, WorldSpec};
use gbpm::estimators::{MleMode, MleOptions};
use gbpm::game::SolveOptions;
use gbpm::regularizers::RegKind;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::seeds::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldBlock,
    pub regularizer: RegularizerBlock,
    pub algorithm: AlgorithmBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldBlock {
    pub dim: usize,
    /// `2r`, the rank budget of `Theta*`.
    pub rank_bound: usize,
    /// `S`.
    pub nuc_bound: f64,
    #[serde(default = "default_link")]
    pub link: LinkKind,
    #[serde(default = "one")]
    pub contexts: usize,
    pub actions: usize,
    #[serde(default = "default_features")]
    pub feature_mode: FeatureMode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegName {
    ReverseKl,
    ChiSquared,
    MixedKlChi,
    NegEntropy,
    Tsallis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerBlock {
    pub kind: RegName,
    /// `inf` selects the unregularized game.
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsallis_q: Option<f64>,
    #[serde(default = "default_reference")]
    pub reference: ReferenceMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum T0Name {
    EtaAware,
    EtaFree,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmBlock {
    pub kind: Algorithm,
    pub horizon: u64,
    #[serde(default = "default_t0_mode")]
    pub t0_mode: T0Name,
    /// Exploration budget for `t0_mode = "manual"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<u64>,
    #[serde(default = "unit")]
    pub t0_constant: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_solver_iter")]
    pub solver_max_iter: usize,
    #[serde(default = "default_grad_tol")]
    pub estimator_grad_tol: f64,
    #[serde(default = "default_estimator_iter")]
    pub estimator_max_iter: usize,
    #[serde(default = "unit")]
    pub lambda_scale: f64,
    #[serde(default)]
    pub refit_stride: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Trace every `k`-th round; 0 picks by horizon.
    #[serde(default)]
    pub gap_stride: u64,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: default_dir(), formats: default_formats(), gap_stride: 0 }
    }
}

/// Lists to take the cartesian product over. An empty list keeps the base
/// value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub horizon: Vec<u64>,
    #[serde(default)]
    pub dim: Vec<usize>,
    #[serde(default)]
    pub regularizer: Vec<RegName>,
    #[serde(default = "one_u64")]
    pub seeds: u64,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_link() -> LinkKind {
    LinkKind::Logistic
}
fn one() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_features() -> FeatureMode {
    FeatureMode::SimplexCorners
}
fn default_reference() -> ReferenceMode {
    ReferenceMode::Explore
}
fn default_t0_mode() -> T0Name {
    T0Name::EtaAware
}
fn default_delta() -> f64 {
    0.1
}
fn default_solver_tol() -> f64 {
    SolveOptions::default().tol
}
fn default_solver_iter() -> usize {
    SolveOptions::default().max_iter
}
fn default_grad_tol() -> f64 {
    MleOptions::default().grad_tol
}
fn default_estimator_iter() -> usize {
    MleOptions::default().max_iter
}
fn default_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn block<T: DeserializeOwned>(doc: &toml::Table, key: &str, required: bool) -> Result<Option<T>> {
    match doc.get(key) {
        None if required => Err(HarnessError::config(key, "missing block")),
        None => Ok(None),
        Some(v) => v
            .clone()
            .try_into()
            .map(Some)
            .map_err(|e: toml::de::Error| HarnessError::config(key, e.message().trim())),
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document. Errors name the offending block
    /// or field.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let doc: toml::Table = s.parse().map_err(|e: toml::de::Error| HarnessError::config("<document>", e.to_string()))?;
        for key in doc.keys() {
            if !["world", "regularizer", "algorithm", "output", "sweep"].contains(&key.as_str()) {
                return Err(HarnessError::config(key.as_str(), "unknown block"));
            }
        }
        let cfg = ExperimentConfig {
            world: block(&doc, "world", true)?.unwrap(),
            regularizer: block(&doc, "regularizer", true)?.unwrap(),
            algorithm: block(&doc, "algorithm", true)?.unwrap(),
            output: block(&doc, "output", false)?.unwrap_or_default(),
            sweep: block(&doc, "sweep", false)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Serialize(e.to_string()))
    }

    /// SHA-256 of the TOML serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn reg_kind(&self) -> Result<RegKind> {
        let r = &self.regularizer;
        Ok(match r.kind {
            RegName::ReverseKl => RegKind::ReverseKl,
            RegName::ChiSquared => RegKind::ChiSquared,
            RegName::MixedKlChi => RegKind::MixedKlChi,
            RegName::NegEntropy => RegKind::NegEntropy,
            RegName::Tsallis => RegKind::Tsallis(
                r.tsallis_q.ok_or_else(|| HarnessError::config("regularizer.tsallis_q", "required for kind = \"tsallis\""))?,
            ),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.world;
        if w.dim < 2 {
            return Err(HarnessError::config("world.dim", format!("must be >= 2, got {}", w.dim)));
        }
        if w.rank_bound == 0 || w.rank_bound % 2 == 1 || w.rank_bound > w.dim {
            return Err(HarnessError::config(
                "world.rank_bound",
                format!("must be even and in [2, dim], got {}", w.rank_bound),
            ));
        }
        if !(w.nuc_bound > 0.0 && w.nuc_bound.is_finite()) {
            return Err(HarnessError::config("world.nuc_bound", "must be positive and finite"));
        }
        if w.contexts == 0 {
            return Err(HarnessError::config("world.contexts", "must be >= 1"));
        }
        if w.actions == 0 {
            return Err(HarnessError::config("world.actions", "must be >= 1"));
        }
        let r = &self.regularizer;
        if !(r.eta > 0.0) {
            return Err(HarnessError::config("regularizer.eta", format!("must be positive, got {}", r.eta)));
        }
        if let Some(q) = r.tsallis_q {
            if r.kind != RegName::Tsallis {
                return Err(HarnessError::config("regularizer.tsallis_q", "only valid for kind = \"tsallis\""));
            }
            if !((q > 0.0 && q < 1.0) || (q > 1.0 && q <= 2.0)) {
                return Err(HarnessError::config("regularizer.tsallis_q", format!("must lie in (0,1) or (1,2], got {q}")));
            }
        }
        self.reg_kind()?;
        let a = &self.algorithm;
        if a.horizon == 0 {
            return Err(HarnessError::config("algorithm.horizon", "must be >= 1"));
        }
        match (a.t0_mode, a.t0) {
            (T0Name::Manual, None) => {
                return Err(HarnessError::config("algorithm.t0", "required for t0_mode = \"manual\""))
            }
            (T0Name::Manual, Some(t0)) if t0 == 0 || t0 > a.horizon => {
                return Err(HarnessError::config("algorithm.t0", format!("must lie in [1, horizon], got {t0}")))
            }
            (T0Name::EtaAware | T0Name::EtaFree, Some(_)) => {
                return Err(HarnessError::config("algorithm.t0", "only valid for t0_mode = \"manual\""))
            }
            _ => {}
        }
        if !(a.delta > 0.0 && a.delta < 1.0) {
            return Err(HarnessError::config("algorithm.delta", format!("must lie in (0,1), got {}", a.delta)));
        }
        if !(a.t0_constant > 0.0) {
            return Err(HarnessError::config("algorithm.t0_constant", "must be positive"));
        }
        if !(a.lambda_scale >= 0.0) {
            return Err(HarnessError::config("algorithm.lambda_scale", "must be >= 0"));
        }
        if !(a.solver_tol > 0.0) || a.solver_max_iter == 0 {
            return Err(HarnessError::config("algorithm.solver_tol", "tolerance and iteration budget must be positive"));
        }
        if !(a.estimator_grad_tol > 0.0) || a.estimator_max_iter == 0 {
            return Err(HarnessError::config(
                "algorithm.estimator_grad_tol",
                "tolerance and iteration budget must be positive",
            ));
        }
        if self.output.formats.is_empty() {
            return Err(HarnessError::config("output.formats", "needs at least one format"));
        }
        if let Some(s) = &self.sweep {
            if s.seeds == 0 {
                return Err(HarnessError::config("sweep.seeds", "must be >= 1"));
            }
            if s.eta.iter().any(|e| !(*e > 0.0)) {
                return Err(HarnessError::config("sweep.eta", "every value must be positive"));
            }
            if s.horizon.contains(&0) {
                return Err(HarnessError::config("sweep.horizon", "every value must be >= 1"));
            }
            if s.regularizer.contains(&RegName::Tsallis) && r.tsallis_q.is_none() {
                return Err(HarnessError::config("sweep.regularizer", "tsallis needs regularizer.tsallis_q"));
            }
        }
        self.to_run_config()?
            .validate()
            .map_err(|e| HarnessError::config("world", e.to_string()))
    }

    /// Resolves the config into the learner's run configuration.
    pub fn to_run_config(&self) -> Result<RunConfig> {
        let w = &self.world;
        let a = &self.algorithm;
        let t0_mode = match a.t0_mode {
            T0Name::EtaAware => T0Mode::EtaAware,
            T0Name::EtaFree => T0Mode::EtaFree,
            T0Name::Manual => T0Mode::Manual(a.t0.unwrap_or(a.horizon)),
        };
        let estimator = MleOptions {
            max_iter: a.estimator_max_iter,
            grad_tol: a.estimator_grad_tol,
            nuc_bound: w.nuc_bound,
            mode: match a.kind {
                Algorithm::Gs => MleMode::ConstrainedBall,
                Algorithm::Etc => MleMode::NuclearProx,
            },
            ..MleOptions::default()
        };
        Ok(RunConfig {
            world: WorldSpec {
                dim: w.dim,
                rank_bound: w.rank_bound,
                nuc_bound: w.nuc_bound,
                link: w.link,
                n_contexts: w.contexts,
                n_actions: w.actions,
                feature_mode: w.feature_mode,
                seed: w.seed,
            },
            regularizer: self.reg_kind()?,
            eta: self.regularizer.eta,
            reference: self.regularizer.reference,
            horizon: a.horizon,
            algorithm: a.kind,
            t0_mode,
            t0_constant: a.t0_constant,
            delta: a.delta,
            seed: a.seed,
            estimator,
            lambda_scale: a.lambda_scale,
            solver: SolveOptions { tol: a.solver_tol, max_iter: a.solver_max_iter },
            refit_stride: a.refit_stride,
            gap_stride: self.output.gap_stride,
        })
    }

    /// One config per sweep point and seed, in a fixed order: regularizer,
    /// eta, dim, horizon, then seed index. Run seeds come from the master
    /// seed and the position in that order. Without a sweep block the config
    /// itself is the only point.
    pub fn expand(&self) -> Vec<SweepPoint> {
        let Some(s) = &self.sweep else {
            let mut only = self.clone();
            only.sweep = None;
            return vec![SweepPoint { point: 0, seed_index: 0, config: only }];
        };
        let or_base = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
        let regs = if s.regularizer.is_empty() { vec![self.regularizer.kind] } else { s.regularizer.clone() };
        let etas = or_base(&s.eta, self.regularizer.eta);
        let dims = if s.dim.is_empty() { vec![self.world.dim] } else { s.dim.clone() };
        let horizons = if s.horizon.is_empty() { vec![self.algorithm.horizon] } else { s.horizon.clone() };
        let mut out = Vec::new();
        let mut point = 0;
        for &reg in &regs {
            for &eta in &etas {
                for &dim in &dims {
                    for &horizon in &horizons {
                        for k in 0..s.seeds {
                            let mut c = self.clone();
                            c.sweep = None;
                            c.regularizer.kind = reg;
                            if reg != RegName::Tsallis {
                                c.regularizer.tsallis_q = None;
                            }
                            c.regularizer.eta = eta;
                            c.world.dim = dim;
                            c.algorithm.horizon = horizon;
                            c.algorithm.seed = derive_seed(s.master_seed, point * s.seeds + k);
                            out.push(SweepPoint { point, seed_index: k, config: c });
                        }
                        point += 1;
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub point: u64,
    pub seed_index: u64,
    pub config: ExperimentConfig,
}

impl SweepPoint {
    pub fn dir_name(&self) -> String {
        format!("p{:03}-s{:03}", self.point, self.seed_index)
    }
}
