//! Likelihood estimators of `Theta` from duel outcomes.
//!
//! The negative log-likelihood is `L(Theta) = sum_s m(<Theta, X_s>) - r_s <Theta, X_s>`
//! with `X_s = phi1_s phi2_s^T` and `m' = mu`, so `<Theta, X_s> = phi1^T Theta phi2`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::env::LinkSpec;
use crate::error::{GbpmError, Result};
use crate::skewlin::{skew_project, svt_skew, SkewMatrix};

/// One duel: context, the two actions, their features and the outcome
/// (`true` when the first action won).
#[derive(Clone, Debug, PartialEq)]
pub struct DuelRecord {
    pub context: usize,
    pub a1: usize,
    pub a2: usize,
    pub phi1: DVector<f64>,
    pub phi2: DVector<f64>,
    pub outcome: bool,
}

/// Direct loss and Euclidean gradient over a list of records.
pub fn nll_and_grad(theta: &SkewMatrix, data: &[DuelRecord], link: &LinkSpec) -> (f64, DMatrix<f64>) {
    let d = theta.dim();
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(d, d);
    for rec in data {
        let z = theta.bilinear(&rec.phi1, &rec.phi2);
        let r = if rec.outcome { 1.0 } else { 0.0 };
        loss += link.log_partition(z) - r * z;
        grad += &rec.phi1 * rec.phi2.transpose() * (link.mu(z) - r);
    }
    (loss, grad)
}

/// Duel data aggregated per `(context, a1, a2)` cell: count and wins.
///
/// The loss only depends on these, so evaluating it costs one term per
/// distinct cell rather than one per duel.
#[derive(Clone, Debug, Default)]
pub struct DuelStats {
    dim: usize,
    cells: Vec<Cell>,
    index: HashMap<(usize, usize, usize), usize>,
    n_obs: u64,
}

#[derive(Clone, Debug)]
struct Cell {
    /// column-major `phi1 phi2^T`
    x: Vec<f64>,
    count: f64,
    wins: f64,
}

impl DuelStats {
    pub fn new(dim: usize) -> Self {
        DuelStats {
            dim,
            ..Default::default()
        }
    }

    pub fn from_records(dim: usize, data: &[DuelRecord]) -> Result<Self> {
        let mut s = DuelStats::new(dim);
        for r in data {
            s.push(r)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, rec: &DuelRecord) -> Result<()> {
        self.add(rec.context, rec.a1, rec.a2, &rec.phi1, &rec.phi2, rec.outcome)
    }

    pub fn add(
        &mut self,
        context: usize,
        a1: usize,
        a2: usize,
        phi1: &DVector<f64>,
        phi2: &DVector<f64>,
        outcome: bool,
    ) -> Result<()> {
        if phi1.len() != self.dim || phi2.len() != self.dim {
            return Err(GbpmError::Dimension(format!(
                "features of length {} and {} against dim {}",
                phi1.len(),
                phi2.len(),
                self.dim
            )));
        }
        let key = (context, a1, a2);
        let i = match self.index.get(&key) {
            Some(&i) => i,
            None => {
                let x = (phi1 * phi2.transpose()).as_slice().to_vec();
                self.cells.push(Cell {
                    x,
                    count: 0.0,
                    wins: 0.0,
                });
                self.index.insert(key, self.cells.len() - 1);
                self.cells.len() - 1
            }
        };
        self.cells[i].count += 1.0;
        if outcome {
            self.cells[i].wins += 1.0;
        }
        self.n_obs += 1;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_obs(&self) -> u64 {
        self.n_obs
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Unnormalized loss and Euclidean gradient.
    pub fn nll_and_grad(&self, theta: &SkewMatrix, link: &LinkSpec) -> (f64, DMatrix<f64>) {
        let th = theta.matrix().as_slice();
        let mut g = vec![0.0; self.dim * self.dim];
        let mut loss = 0.0;
        for c in &self.cells {
            let z: f64 = c.x.iter().zip(th).map(|(a, b)| a * b).sum();
            loss += c.count * link.log_partition(z) - c.wins * z;
            let coef = c.count * link.mu(z) - c.wins;
            for (gi, xi) in g.iter_mut().zip(&c.x) {
                *gi += coef * xi;
            }
        }
        (loss, DMatrix::from_vec(self.dim, self.dim, g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MleMode {
    ConstrainedBall,
    NuclearProx,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleOptions {
    pub max_iter: usize,
    /// Tolerance on the gradient mapping of the per-observation loss.
    pub grad_tol: f64,
    /// Relative objective change that ends the proximal iteration.
    pub obj_rel_tol: f64,
    pub step_init: f64,
    /// Step shrink factor on a failed sufficient-decrease test.
    pub backtrack: f64,
    /// Step growth factor after an accepted step.
    pub growth: f64,
    /// `S`, radius of the Frobenius ball for the constrained estimator.
    pub nuc_bound: f64,
    pub mode: MleMode,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            max_iter: 20_000,
            grad_tol: 1e-8,
            obj_rel_tol: 1e-10,
            step_init: 1.0,
            backtrack: 0.5,
            growth: 2.0,
            nuc_bound: 1.0,
            mode: MleMode::ConstrainedBall,
        }
    }
}

impl MleOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(GbpmError::InvalidSpec("grad_tol must be positive".into()));
        }
        if !(self.nuc_bound > 0.0) {
            return Err(GbpmError::InvalidSpec("nuc_bound must be positive".into()));
        }
        if !(self.step_init > 0.0) || !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.growth >= 1.0) {
            return Err(GbpmError::InvalidSpec("invalid step rule parameters".into()));
        }
        if self.max_iter == 0 {
            return Err(GbpmError::InvalidSpec("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Estimate together with solver diagnostics.
#[derive(Clone, Debug)]
pub struct MleFit {
    pub theta: SkewMatrix,
    pub iterations: usize,
    /// Final gradient-mapping norm.
    pub residual: f64,
    /// Objective at `theta` (per-observation loss, plus penalty if any).
    pub objective: f64,
    /// Step size in use at exit, reusable as the next warm start.
    pub step: f64,
}

/// Projection onto `K_S`: skew part, then the Frobenius ball of radius `s`.
pub fn project_ks(m: &DMatrix<f64>, s: f64) -> Result<SkewMatrix> {
    let k = skew_project(m)?;
    let n = k.frobenius_norm();
    Ok(if n > s { k.scaled(s / n) } else { k })
}

/// `argmin_{Theta in K_S} L(Theta)`.
pub fn constrained_mle(data: &DuelStats, s: f64, link: &LinkSpec, opts: &MleOptions) -> Result<SkewMatrix> {
    Ok(constrained_mle_from(data, s, link, opts, None)?.theta)
}

/// Projected gradient with backtracking, optionally warm-started.
pub fn constrained_mle_from(
    data: &DuelStats,
    s: f64,
    link: &LinkSpec,
    opts: &MleOptions,
    warm: Option<(&SkewMatrix, f64)>,
) -> Result<MleFit> {
    opts.validate()?;
    if opts.mode != MleMode::ConstrainedBall {
        return Err(GbpmError::InvalidSpec("constrained estimator needs mode = constrained-ball".into()));
    }
    if !(s > 0.0) {
        return Err(GbpmError::InvalidSpec(format!("radius must be positive, got {s}")));
    }
    let d = data.dim();
    if data.n_obs() == 0 {
        return Ok(MleFit {
            theta: SkewMatrix::zeros(d),
            iterations: 0,
            residual: 0.0,
            objective: 0.0,
            step: opts.step_init,
        });
    }
    let (theta0, step0) = match warm {
        Some((t, st)) => {
            if t.dim() != d {
                return Err(GbpmError::Dimension("warm start dimension".into()));
            }
            (project_ks(t.matrix(), s)?, st)
        }
        None => (SkewMatrix::zeros(d), opts.step_init),
    };
    let n = data.n_obs() as f64;
    let eval = |t: &SkewMatrix| -> Result<(f64, SkewMatrix)> {
        let (l, g) = data.nll_and_grad(t, link);
        Ok((l / n, skew_project(&(g / n))?))
    };
    let project = |m: &DMatrix<f64>| project_ks(m, s);
    prox_descent(theta0, step0, opts, eval, project, |_| 0.0)
}

/// `argmin_{Theta in Skew(d)} L(Theta)/T0 + lambda ||Theta||_nuc`.
pub fn nuclear_mle(data: &DuelStats, lambda: f64, link: &LinkSpec, opts: &MleOptions) -> Result<SkewMatrix> {
    Ok(nuclear_mle_from(data, lambda, link, opts, None)?.theta)
}

/// Proximal gradient with singular-value soft-thresholding.
pub fn nuclear_mle_from(
    data: &DuelStats,
    lambda: f64,
    link: &LinkSpec,
    opts: &MleOptions,
    warm: Option<&SkewMatrix>,
) -> Result<MleFit> {
    opts.validate()?;
    if opts.mode != MleMode::NuclearProx {
        return Err(GbpmError::InvalidSpec("nuclear estimator needs mode = nuclear-prox".into()));
    }
    if !(lambda >= 0.0) {
        return Err(GbpmError::InvalidSpec(format!("lambda must be >= 0, got {lambda}")));
    }
    let d = data.dim();
    if data.n_obs() == 0 {
        return Ok(MleFit {
            theta: SkewMatrix::zeros(d),
            iterations: 0,
            residual: 0.0,
            objective: 0.0,
            step: opts.step_init,
        });
    }
    let theta0 = match warm {
        Some(t) if t.dim() == d => t.clone(),
        Some(_) => return Err(GbpmError::Dimension("warm start dimension".into())),
        None => SkewMatrix::zeros(d),
    };
    let n = data.n_obs() as f64;
    let eval = |t: &SkewMatrix| -> Result<(f64, SkewMatrix)> {
        let (l, g) = data.nll_and_grad(t, link);
        Ok((l / n, skew_project(&(g / n))?))
    };
    let prox_step = std::cell::Cell::new(opts.step_init);
    let prox = |m: &DMatrix<f64>| -> Result<SkewMatrix> {
        svt_skew(&skew_project(m)?, prox_step.get() * lambda)
    };
    // prox_descent reports the step through the closure below
    prox_descent_with_step(theta0, opts.step_init, opts, eval, prox, &prox_step, |t| {
        lambda * t.nuclear_norm()
    })
}

fn prox_descent(
    theta0: SkewMatrix,
    step0: f64,
    opts: &MleOptions,
    eval: impl Fn(&SkewMatrix) -> Result<(f64, SkewMatrix)>,
    prox: impl Fn(&DMatrix<f64>) -> Result<SkewMatrix>,
    penalty: impl Fn(&SkewMatrix) -> f64,
) -> Result<MleFit> {
    let cell = std::cell::Cell::new(step0);
    prox_descent_with_step(theta0, step0, opts, eval, prox, &cell, penalty)
}

/// Shared proximal-gradient loop. `step_cell` always holds the trial step so
/// that a step-dependent prox (SVT) can read it.
fn prox_descent_with_step(
    theta0: SkewMatrix,
    step0: f64,
    opts: &MleOptions,
    eval: impl Fn(&SkewMatrix) -> Result<(f64, SkewMatrix)>,
    prox: impl Fn(&DMatrix<f64>) -> Result<SkewMatrix>,
    step_cell: &std::cell::Cell<f64>,
    penalty: impl Fn(&SkewMatrix) -> f64,
) -> Result<MleFit> {
    let mut theta = theta0;
    let (mut f, mut g) = eval(&theta)?;
    let mut obj = f + penalty(&theta);
    let mut step = step0.max(1e-12);
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iter {
        let mut accepted = None;
        for _ in 0..200 {
            step_cell.set(step);
            let cand = prox(&(theta.matrix() - g.matrix() * step))?;
            let delta = cand.matrix() - theta.matrix();
            let (fc, gc) = eval(&cand)?;
            let model = f + g.matrix().dot(&delta) + delta.norm_squared() / (2.0 * step);
            if fc <= model + 1e-15 * f.abs().max(1.0) {
                accepted = Some((cand, delta, fc, gc));
                break;
            }
            step *= opts.backtrack;
        }
        let Some((cand, delta, fc, gc)) = accepted else {
            return Err(GbpmError::EstimatorNotConverged {
                iterations: it,
                residual,
                last: Box::new(theta),
            });
        };
        residual = delta.norm() / step;
        let obj_c = fc + penalty(&cand);
        let change = (obj - obj_c).abs();
        theta = cand;
        f = fc;
        g = gc;
        let prev_obj = obj;
        obj = obj_c;
        let rel_stop = opts.mode == MleMode::NuclearProx
            && change <= opts.obj_rel_tol * prev_obj.abs().max(1.0)
            && it > 0;
        if residual <= opts.grad_tol || rel_stop {
            return Ok(MleFit {
                theta,
                iterations: it + 1,
                residual,
                objective: obj,
                step,
            });
        }
        step *= opts.growth;
    }
    Err(GbpmError::EstimatorNotConverged {
        iterations: opts.max_iter,
        residual,
        last: Box::new(theta),
    })
}

/// `sqrt(32 L_mu log(4d/delta) / T0)`.
pub fn lambda_schedule(t0: u64, delta: f64, l_mu: f64, dim: usize) -> Result<f64> {
    if t0 == 0 {
        return Err(GbpmError::Domain("T0 must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GbpmError::Domain(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok((32.0 * l_mu * (4.0 * dim as f64 / delta).ln() / t0 as f64).sqrt())
}
