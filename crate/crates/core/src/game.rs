//! The symmetric preference game, its regularized objective, best responses,
//! the equilibrium solver and the dual gap.
//!
//! Everything decouples across contexts because both `J` and the population
//! `psi` are `d0`-weighted sums of per-context terms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::env::PreferenceWorld;
use crate::error::{GbpmError, Result};
use crate::lp;
use crate::policy::Policy;
use crate::regularizers::{best_response_row, psi_value, RegularizerSpec};
use crate::skewlin::SkewMatrix;

/// Payoff tables `B_x(a, b) = mu(phi(x,a)^T Theta phi(x,b))` together with
/// `d0` and the regularizer.
#[derive(Clone, Debug)]
pub struct GameHandle {
    tables: Vec<DMatrix<f64>>,
    d0: Vec<f64>,
    reg: RegularizerSpec,
}

impl GameHandle {
    pub fn new(world: &PreferenceWorld, theta: &SkewMatrix, reg: &RegularizerSpec) -> Result<Self> {
        if theta.dim() != world.dim() {
            return Err(GbpmError::Dimension(format!(
                "theta has dim {} but world features have dim {}",
                theta.dim(),
                world.dim()
            )));
        }
        reg.reference().check_shape(&world.action_counts())?;
        Ok(GameHandle {
            tables: payoff_tables(world, theta),
            d0: world.context_dist().to_vec(),
            reg: reg.clone(),
        })
    }

    /// Game from explicit tables; each must satisfy `B + B^T = 1` up to 1e-12.
    pub fn from_tables(tables: Vec<DMatrix<f64>>, d0: Vec<f64>, reg: &RegularizerSpec) -> Result<Self> {
        if tables.len() != d0.len() {
            return Err(GbpmError::Dimension("one table per context required".into()));
        }
        for (x, t) in tables.iter().enumerate() {
            if !t.is_square() {
                return Err(GbpmError::Dimension(format!("table {x} is not square")));
            }
            let dev = (t + t.transpose()).add_scalar(-1.0).amax();
            if dev > 1e-12 {
                return Err(GbpmError::InvalidSpec(format!(
                    "table {x} is not a symmetric game (max |B + B^T - 1| = {dev:.3e})"
                )));
            }
        }
        let counts: Vec<usize> = tables.iter().map(|t| t.nrows()).collect();
        reg.reference().check_shape(&counts)?;
        Ok(GameHandle {
            tables,
            d0,
            reg: reg.clone(),
        })
    }

    pub fn reg(&self) -> &RegularizerSpec {
        &self.reg
    }

    pub fn with_reg(&self, reg: &RegularizerSpec) -> Result<Self> {
        reg.reference().check_shape(&self.action_counts())?;
        Ok(GameHandle {
            tables: self.tables.clone(),
            d0: self.d0.clone(),
            reg: reg.clone(),
        })
    }

    pub fn table(&self, x: usize) -> &DMatrix<f64> {
        &self.tables[x]
    }

    pub fn d0(&self) -> &[f64] {
        &self.d0
    }

    pub fn n_contexts(&self) -> usize {
        self.tables.len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.nrows()).collect()
    }

    /// `(B_x p)_a`: payoff of pure `a` against `p`.
    pub fn row_payoffs(&self, x: usize, p: &[f64]) -> Vec<f64> {
        let t = &self.tables[x];
        (0..t.nrows())
            .map(|a| (0..t.ncols()).map(|b| t[(a, b)] * p[b]).sum())
            .collect()
    }

    /// `(B_x^T p)_b`: payoff of `p` against pure `b`.
    pub fn col_payoffs(&self, x: usize, p: &[f64]) -> Vec<f64> {
        let t = &self.tables[x];
        (0..t.ncols())
            .map(|b| (0..t.nrows()).map(|a| t[(a, b)] * p[a]).sum())
            .collect()
    }

    fn check_policy(&self, pi: &Policy) -> Result<()> {
        pi.check_shape(&self.action_counts())
    }
}

/// `B_x` for every context. The lower triangle is filled as `1 - B(a, b)` so
/// the tables are exactly symmetric games.
pub fn payoff_tables(world: &PreferenceWorld, theta: &SkewMatrix) -> Vec<DMatrix<f64>> {
    let link = world.link();
    world
        .features()
        .iter()
        .map(|acts| {
            let k = acts.len();
            let mut t = DMatrix::from_element(k, k, 0.5);
            for a in 0..k {
                let tphi = theta.matrix() * &acts[a];
                for b in (a + 1)..k {
                    // phi_a^T Theta phi_b = -(Theta phi_a)^T phi_b
                    let z = -tphi.dot(&acts[b]);
                    let v = link.mu(z);
                    t[(a, b)] = v;
                    t[(b, a)] = 1.0 - v;
                }
            }
            t
        })
        .collect()
}

/// `J(pi1, pi2) = sum_x d0(x) pi1_x^T B_x pi2_x`.
pub fn payoff(h: &GameHandle, pi1: &Policy, pi2: &Policy) -> Result<f64> {
    h.check_policy(pi1)?;
    h.check_policy(pi2)?;
    Ok((0..h.n_contexts())
        .map(|x| {
            let c = h.col_payoffs(x, pi1.row(x));
            h.d0[x] * c.iter().zip(pi2.row(x)).map(|(u, v)| u * v).sum::<f64>()
        })
        .sum())
}

/// `J_eta(pi1, pi2) = J - psi(pi1)/eta + psi(pi2)/eta`.
pub fn payoff_regularized(h: &GameHandle, pi1: &Policy, pi2: &Policy) -> Result<f64> {
    let j = payoff(h, pi1, pi2)?;
    if h.reg.is_unregularized() {
        return Ok(j);
    }
    let ie = h.reg.inv_eta();
    Ok(j - ie * psi_value(&h.reg, pi1)? + ie * psi_value(&h.reg, pi2)?)
}

/// Min-player best response `argmin_pi J_eta(pi1, pi)`.
pub fn best_response(h: &GameHandle, pi1: &Policy) -> Result<Policy> {
    h.check_policy(pi1)?;
    let rows = (0..h.n_contexts())
        .map(|x| h.reg.best_response_context(x, &h.col_payoffs(x, pi1.row(x))))
        .collect();
    Ok(Policy::from_rows_unchecked(rows))
}

/// Max-player best response `argmax_pi J_eta(pi, pi2)`. For reverse KL this is
/// the Gibbs map `pi(a) ∝ ref(a) exp(eta (B pi2)_a)`.
pub fn max_best_response(h: &GameHandle, pi2: &Policy) -> Result<Policy> {
    h.check_policy(pi2)?;
    let rows = (0..h.n_contexts())
        .map(|x| max_br_row(h, x, pi2.row(x)))
        .collect();
    Ok(Policy::from_rows_unchecked(rows))
}

fn max_br_row(h: &GameHandle, x: usize, p: &[f64]) -> Vec<f64> {
    let cost: Vec<f64> = h.row_payoffs(x, p).iter().map(|v| -v).collect();
    h.reg.best_response_context(x, &cost)
}

/// `1/2 - min_pi J_eta(pi_hat, pi)`.
pub fn dual_gap(pi: &Policy, h: &GameHandle) -> Result<f64> {
    h.check_policy(pi)?;
    let mut inner = 0.0;
    let ie = h.reg.inv_eta();
    for x in 0..h.n_contexts() {
        let c = h.col_payoffs(x, pi.row(x));
        let br = h.reg.best_response_context(x, &c);
        let mut v: f64 = c.iter().zip(&br).map(|(u, w)| u * w).sum();
        if ie > 0.0 {
            v += ie * (h.reg.psi_context(x, &br)? - h.reg.psi_context(x, pi.row(x))?);
        }
        inner += h.d0[x] * v;
    }
    Ok(0.5 - inner)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Target dual gap.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-7,
            max_iter: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub policy: Policy,
    /// Dual gap of `policy` in the solved game.
    pub dual_gap_estimate: f64,
    /// Largest per-context iteration count.
    pub iterations: usize,
    pub converged: bool,
    /// Sum over contexts of the unweighted per-context dual gap.
    pub residual: f64,
}

/// Symmetric equilibrium with dual gap at most `tol`.
pub fn solve_sne(h: &GameHandle, tol: f64, max_iter: usize) -> Result<SolveReport> {
    solve_sne_from(h, None, &SolveOptions { tol, max_iter })
}

/// As [`solve_sne`], warm-started from `init` when given.
///
/// Per context, the dual gap `f(p) = h(p) + psi(p)/eta` with
/// `h(p) = 1/2 - min_q [p^T B q + psi(q)/eta]` is convex, vanishes exactly
/// at the equilibrium, and `h` is smooth relative to `psi`. Regularized
/// games therefore run Bregman proximal gradient on `f` in the geometry of
/// `psi`; each step is one exact best response, and a backtracking
/// sufficient-decrease test sets the step. The unregularized game is solved
/// exactly by linear programming.
pub fn solve_sne_from(h: &GameHandle, init: Option<&Policy>, opts: &SolveOptions) -> Result<SolveReport> {
    if !(opts.tol > 0.0) {
        return Err(GbpmError::InvalidSpec(format!("tol must be positive, got {}", opts.tol)));
    }
    if let Some(p) = init {
        h.check_policy(p)?;
    }
    let mut rows = Vec::with_capacity(h.n_contexts());
    let mut iterations = 0;
    let mut residual = 0.0;
    for x in 0..h.n_contexts() {
        let (row, it, res) = if h.reg.is_unregularized() {
            solve_context_lp(h, x)
        } else {
            let start = init
                .map(|p| p.row(x).to_vec())
                .unwrap_or_else(|| h.reg.reference().row(x).to_vec());
            solve_context_bregman(h, x, start, opts.max_iter, opts.tol)
        };
        iterations = iterations.max(it);
        residual += res;
        rows.push(row);
    }
    let policy = Policy::from_rows_unchecked(rows);
    let gap = dual_gap(&policy, h)?;
    if gap <= opts.tol {
        Ok(SolveReport {
            policy,
            dual_gap_estimate: gap,
            iterations,
            converged: true,
            residual,
        })
    } else {
        Err(GbpmError::SolverNotConverged {
            iterations,
            gap,
            best: Box::new(policy),
        })
    }
}

fn solve_context_lp(h: &GameHandle, x: usize) -> (Vec<f64>, usize, f64) {
    let t = h.table(x);
    let b: Vec<Vec<f64>> = (0..t.nrows())
        .map(|i| (0..t.ncols()).map(|j| t[(i, j)]).collect())
        .collect();
    let (q, pivots) = lp::min_player_strategy(&b);
    // exploitability of q in this context
    let row = h.row_payoffs(x, &q);
    let res = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 0.5;
    (q, pivots, res.max(0.0))
}

/// `(f(p), h(p), grad h(p))` for the per-context dual gap.
fn context_gap(h: &GameHandle, x: usize, p: &[f64]) -> (f64, f64, Vec<f64>) {
    let ie = h.reg.inv_eta();
    let c = h.col_payoffs(x, p);
    let q = h.reg.best_response_context(x, &c);
    let psi = |v: &[f64]| h.reg.psi_context(x, v).unwrap_or(f64::INFINITY);
    let inner: f64 = c.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() + ie * psi(&q);
    let hv = 0.5 - inner;
    let grad: Vec<f64> = h.row_payoffs(x, &q).iter().map(|v| -v).collect();
    (hv + ie * psi(p), hv, grad)
}

fn solve_context_bregman(h: &GameHandle, x: usize, start: Vec<f64>, max_iter: usize, tol: f64) -> (Vec<f64>, usize, f64) {
    let reg = &h.reg;
    let ie = reg.inv_eta();
    let rf = reg.reference().row(x);
    // interior start: several kinds have unbounded gradients on the boundary
    let mut p: Vec<f64> = if start.iter().all(|&v| v > 0.0) {
        start
    } else {
        start.iter().zip(rf).map(|(a, r)| 0.999 * a + 0.001 * r).collect()
    };
    let psi = |v: &[f64]| reg.psi_context(x, v).unwrap_or(f64::INFINITY);
    let target = 0.25 * tol;
    let (mut f, mut hv, mut grad) = context_gap(h, x, &p);
    let mut s = 1.0;
    let mut it = 0;
    while it < max_iter && f > target {
        it += 1;
        let gpsi = reg.psi_grad_context(x, &p);
        let cost: Vec<f64> = grad.iter().zip(&gpsi).map(|(g, d)| g - d / s).collect();
        let u = best_response_row(reg.kind(), rf, &cost, 1.0 / (ie + 1.0 / s));
        let (fu, hu, gu) = context_gap(h, x, &u);
        let lin: f64 = grad.iter().zip(u.iter().zip(&p)).map(|(g, (a, b))| g * (a - b)).sum();
        let breg = psi(&u) - psi(&p) - gpsi.iter().zip(u.iter().zip(&p)).map(|(g, (a, b))| g * (a - b)).sum::<f64>();
        // the slack absorbs rounding once f is near machine precision
        if hu <= hv + lin + breg.max(0.0) / s + 1e-15 * (1.0 + hv.abs()) && fu.is_finite() {
            p = u;
            f = fu;
            hv = hu;
            grad = gu;
            s = (s * 2.0).min(1e12);
        } else {
            s *= 0.5;
            if s < 1e-14 {
                break;
            }
        }
    }
    (p, it, f.max(0.0))
}
