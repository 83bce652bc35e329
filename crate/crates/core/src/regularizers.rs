//! Strongly convex regularizers `psi` over policies.
//!
//! The population regularizer weights each context by `d0(x)`:
//! `psi(pi) = sum_x d0(x) psi_x(pi(.|x))`. Per-context forms, with
//! `u = pi/pi_ref`:
//!
//! | kind          | `psi_x`                                  |
//! |---------------|------------------------------------------|
//! | reverse KL    | `sum ref * u log u`                      |
//! | chi-squared   | `1/2 sum ref * (u - 1)^2`                |
//! | mixed         | sum of the two                           |
//! | neg-entropy   | `sum p log p + log K`                    |
//! | Tsallis(q)    | `(sum p^q - K^(1-q)) / (q - 1)`          |
//!
//! All of them are zero at their minimizer and nonnegative.

use serde::{Deserialize, Serialize};

use crate::error::{GbpmError, Result};
use crate::policy::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegKind {
    ReverseKl,
    ChiSquared,
    MixedKlChi,
    NegEntropy,
    /// Exponent `q` in `(0, 1) ∪ (1, 2]`.
    Tsallis(f64),
}

impl RegKind {
    /// Kinds that measure divergence to a reference policy.
    pub fn uses_reference(&self) -> bool {
        matches!(self, RegKind::ReverseKl | RegKind::ChiSquared | RegKind::MixedKlChi)
    }

    pub fn name(&self) -> String {
        match self {
            RegKind::ReverseKl => "reverse-kl".into(),
            RegKind::ChiSquared => "chi-squared".into(),
            RegKind::MixedKlChi => "mixed-kl-chi".into(),
            RegKind::NegEntropy => "neg-entropy".into(),
            RegKind::Tsallis(q) => format!("tsallis-{q}"),
        }
    }

    fn validate(&self) -> Result<()> {
        if let RegKind::Tsallis(q) = *self {
            let ok = (q > 0.0 && q < 1.0) || (q > 1.0 && q <= 2.0);
            if !ok {
                return Err(GbpmError::InvalidSpec(format!(
                    "Tsallis exponent must lie in (0,1) or (1,2], got {q}"
                )));
            }
        }
        Ok(())
    }

    /// Strong-convexity modulus of `psi_x` w.r.t. `||.||_1` on a single
    /// context with `k` actions.
    fn context_modulus(&self, k: usize) -> f64 {
        match *self {
            RegKind::ReverseKl | RegKind::NegEntropy => 0.5,
            RegKind::ChiSquared => 1.0,
            RegKind::MixedKlChi => 1.5,
            RegKind::Tsallis(q) => q * (k as f64).powf(-(q - 1.0).max(0.0)),
        }
    }
}

/// `psi`, the reference policy, the strength `eta` (possibly infinite) and
/// the certified modulus `beta_inv`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizerSpec {
    kind: RegKind,
    reference: Policy,
    eta: f64,
    beta_inv: f64,
    weights: Vec<f64>,
}

impl RegularizerSpec {
    /// `context_dist` is the world's `d0`, used as the context weights.
    pub fn new(kind: RegKind, reference: Policy, eta: f64, context_dist: &[f64]) -> Result<Self> {
        kind.validate()?;
        if !(eta > 0.0) {
            return Err(GbpmError::InvalidSpec(format!("eta must be positive, got {eta}")));
        }
        if reference.n_contexts() != context_dist.len() {
            return Err(GbpmError::Dimension(format!(
                "reference has {} contexts, d0 has {}",
                reference.n_contexts(),
                context_dist.len()
            )));
        }
        if kind.uses_reference() {
            for (x, row) in reference.rows().iter().enumerate() {
                if let Some(a) = row.iter().position(|&p| !(p > 0.0)) {
                    return Err(GbpmError::InvalidSpec(format!(
                        "reference must have full support: context {x}, action {a} has zero mass"
                    )));
                }
            }
        }
        let beta_inv = strong_convexity_constant(kind, &reference.action_counts(), context_dist);
        if eta.is_finite() && !(beta_inv > 0.0) {
            return Err(GbpmError::InvalidSpec(
                "every context needs positive d0 mass for a regularized game".into(),
            ));
        }
        Ok(RegularizerSpec {
            kind,
            reference,
            eta,
            beta_inv,
            weights: context_dist.to_vec(),
        })
    }

    pub fn kind(&self) -> RegKind {
        self.kind
    }

    pub fn reference(&self) -> &Policy {
        &self.reference
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `1/eta`, zero for the unregularized game.
    pub fn inv_eta(&self) -> f64 {
        if self.eta.is_finite() {
            1.0 / self.eta
        } else {
            0.0
        }
    }

    pub fn is_unregularized(&self) -> bool {
        !self.eta.is_finite()
    }

    pub fn beta_inv(&self) -> f64 {
        self.beta_inv
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.beta_inv
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        RegularizerSpec::new(self.kind, self.reference.clone(), eta, &self.weights)
    }

    /// Unweighted `psi_x` on context `x`.
    pub fn psi_context(&self, x: usize, p: &[f64]) -> Result<f64> {
        psi_row(self.kind, self.reference.row(x), p).map_err(|a| support_error(self.kind, x, a))
    }

    /// Gradient of the unweighted `psi_x` at `p`. Entries where the gradient
    /// is unbounded are evaluated at `p = 1e-300`.
    pub fn psi_grad_context(&self, x: usize, p: &[f64]) -> Vec<f64> {
        psi_row_grad(self.kind, self.reference.row(x), p)
    }

    /// Minimizer of `<cost, p> + psi_x(p)/eta` over the simplex of context `x`.
    pub fn best_response_context(&self, x: usize, cost: &[f64]) -> Vec<f64> {
        best_response_row(self.kind, self.reference.row(x), cost, self.eta)
    }
}

fn support_error(kind: RegKind, x: usize, a: usize) -> GbpmError {
    if kind.uses_reference() {
        GbpmError::Support { context: x, action: a }
    } else {
        GbpmError::Boundary { context: x, action: a }
    }
}

/// `beta_inv = 1 / sum_x 1/(d0(x) m_x)` where `m_x` is the per-context
/// modulus. This follows from Cauchy-Schwarz and reduces to `m` for a single
/// context.
pub fn strong_convexity_constant(kind: RegKind, action_counts: &[usize], context_dist: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&k, &w) in action_counts.iter().zip(context_dist) {
        let m = w * kind.context_modulus(k);
        if !(m > 0.0) {
            return 0.0;
        }
        s += 1.0 / m;
    }
    if s > 0.0 {
        1.0 / s
    } else {
        0.0
    }
}

/// `sum_x d0(x) psi_x(pi_x)`.
pub fn psi_value(reg: &RegularizerSpec, pi: &Policy) -> Result<f64> {
    pi.check_shape(&reg.reference.action_counts())?;
    let mut total = 0.0;
    for (x, row) in pi.rows().iter().enumerate() {
        total += reg.weights[x] * reg.psi_context(x, row)?;
    }
    Ok(total)
}

/// Gradient of the population `psi`, one vector per context.
pub fn psi_grad(reg: &RegularizerSpec, pi: &Policy) -> Result<Vec<Vec<f64>>> {
    pi.check_shape(&reg.reference.action_counts())?;
    let mut out = Vec::with_capacity(pi.n_contexts());
    for (x, row) in pi.rows().iter().enumerate() {
        let w = reg.weights[x];
        let rf = reg.reference.row(x);
        let mut g = Vec::with_capacity(row.len());
        for (a, (&p, &r)) in row.iter().zip(rf).enumerate() {
            let v = match reg.kind {
                RegKind::ReverseKl | RegKind::MixedKlChi | RegKind::NegEntropy if p <= 0.0 => {
                    return Err(GbpmError::Boundary { context: x, action: a })
                }
                RegKind::Tsallis(q) if q < 1.0 && p <= 0.0 => {
                    return Err(GbpmError::Boundary { context: x, action: a })
                }
                RegKind::ReverseKl => (p / r).ln() + 1.0,
                RegKind::ChiSquared => p / r - 1.0,
                RegKind::MixedKlChi => (p / r).ln() + p / r,
                RegKind::NegEntropy => p.ln() + 1.0,
                RegKind::Tsallis(q) => q * p.powf(q - 1.0) / (q - 1.0),
            };
            g.push(w * v);
        }
        out.push(g);
    }
    Ok(out)
}

/// Per-context value; `Err(a)` names an action outside the support.
fn psi_row_grad(kind: RegKind, rf: &[f64], p: &[f64]) -> Vec<f64> {
    const FLOOR: f64 = 1e-300;
    p.iter()
        .zip(rf)
        .map(|(&p, &r)| match kind {
            RegKind::ReverseKl => (p.max(FLOOR) / r).ln() + 1.0,
            RegKind::ChiSquared => p / r - 1.0,
            RegKind::MixedKlChi => (p.max(FLOOR) / r).ln() + p / r,
            RegKind::NegEntropy => p.max(FLOOR).ln() + 1.0,
            RegKind::Tsallis(q) if q < 1.0 => q * p.max(FLOOR).powf(q - 1.0) / (q - 1.0),
            RegKind::Tsallis(q) => q * p.powf(q - 1.0) / (q - 1.0),
        })
        .collect()
}

fn psi_row(kind: RegKind, rf: &[f64], p: &[f64]) -> std::result::Result<f64, usize> {
    let k = p.len() as f64;
    let kl = |p: &[f64]| -> std::result::Result<f64, usize> {
        let mut s = 0.0;
        for (a, (&pa, &ra)) in p.iter().zip(rf).enumerate() {
            if pa > 0.0 {
                if !(ra > 0.0) {
                    return Err(a);
                }
                s += pa * (pa / ra).ln();
            }
        }
        Ok(s)
    };
    let chi = |p: &[f64]| -> std::result::Result<f64, usize> {
        let mut s = 0.0;
        for (a, (&pa, &ra)) in p.iter().zip(rf).enumerate() {
            if !(ra > 0.0) {
                if pa > 0.0 {
                    return Err(a);
                }
                continue;
            }
            let u = pa / ra - 1.0;
            s += 0.5 * ra * u * u;
        }
        Ok(s)
    };
    let v = match kind {
        RegKind::ReverseKl => kl(p)?,
        RegKind::ChiSquared => chi(p)?,
        RegKind::MixedKlChi => kl(p)? + chi(p)?,
        RegKind::NegEntropy => {
            p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>() + k.ln()
        }
        RegKind::Tsallis(q) => {
            (p.iter().map(|&v| v.powf(q)).sum::<f64>() - k.powf(1.0 - q)) / (q - 1.0)
        }
    };
    Ok(v.max(0.0))
}

/// Minimizer of `<cost, p> + psi_x(p)/eta` on the simplex. With `eta = inf`
/// this is the lowest-index pure minimizer of `cost`.
pub fn best_response_row(kind: RegKind, rf: &[f64], cost: &[f64], eta: f64) -> Vec<f64> {
    let k = cost.len();
    if !eta.is_finite() {
        let mut best = 0;
        for a in 1..k {
            if cost[a] < cost[best] {
                best = a;
            }
        }
        let mut out = vec![0.0; k];
        out[best] = 1.0;
        return out;
    }
    let c_min = cost.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_max = cost.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match kind {
        RegKind::ReverseKl => gibbs(cost, eta, |a| rf[a].ln()),
        RegKind::NegEntropy => gibbs(cost, eta, |_| 0.0),
        RegKind::ChiSquared => water_fill(rf, cost, eta),
        RegKind::MixedKlChi => {
            let p_of = |tau: f64| -> (Vec<f64>, f64) {
                let mut p = Vec::with_capacity(k);
                let mut dp = 0.0;
                for a in 0..k {
                    let u = solve_log_plus_linear(eta * (tau - cost[a]));
                    p.push(rf[a] * u);
                    dp += rf[a] * eta * u / (1.0 + u);
                }
                (p, dp)
            };
            solve_multiplier(p_of, c_min + 1.0 / eta, c_max + 1.0 / eta)
        }
        RegKind::Tsallis(q) if q > 1.0 => {
            let e = 1.0 / (q - 1.0);
            let scale = (q - 1.0) / q * eta;
            let p_of = |tau: f64| -> (Vec<f64>, f64) {
                let mut p = Vec::with_capacity(k);
                let mut dp = 0.0;
                for &c in cost {
                    let base = scale * (tau - c);
                    if base > 0.0 {
                        p.push(base.powf(e));
                        dp += e * base.powf(e - 1.0) * scale;
                    } else {
                        p.push(0.0);
                    }
                }
                (p, dp)
            };
            solve_multiplier(p_of, c_min, c_max + 1.0 / scale)
        }
        RegKind::Tsallis(q) => {
            let e = -1.0 / (1.0 - q);
            let scale = eta * (1.0 - q) / q;
            let p_of = |tau: f64| -> (Vec<f64>, f64) {
                let mut p = Vec::with_capacity(k);
                let mut dp = 0.0;
                for &c in cost {
                    let base = scale * (c - tau);
                    p.push(base.powf(e));
                    dp += -e * base.powf(e - 1.0) * scale;
                }
                (p, dp)
            };
            let kf = k as f64;
            solve_multiplier(
                p_of,
                c_min - kf.powf(1.0 - q) / scale,
                c_min - 1.0 / scale,
            )
        }
    }
}

/// `p ∝ exp(log_prior(a) - eta * cost[a])`.
fn gibbs(cost: &[f64], eta: f64, log_prior: impl Fn(usize) -> f64) -> Vec<f64> {
    let logits: Vec<f64> = (0..cost.len()).map(|a| log_prior(a) - eta * cost[a]).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Exact chi-squared best response: `p_a = ref_a max(0, 1 + eta (tau - c_a))`.
fn water_fill(rf: &[f64], cost: &[f64], eta: f64) -> Vec<f64> {
    let k = cost.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)));
    // Active set grows in order of increasing cost. With active set A,
    // tau = (1 - sum_A ref (1 - eta c)) / (eta sum_A ref).
    let mut sum_r = 0.0;
    let mut sum_rc = 0.0;
    let mut tau = f64::NAN;
    for (n, &a) in order.iter().enumerate() {
        sum_r += rf[a];
        sum_rc += rf[a] * cost[a];
        let t = (1.0 - sum_r + eta * sum_rc) / (eta * sum_r);
        let next_inactive = order
            .get(n + 1)
            .map(|&b| 1.0 + eta * (t - cost[b]) <= 0.0)
            .unwrap_or(true);
        if next_inactive {
            tau = t;
            break;
        }
    }
    let mut p: Vec<f64> = (0..k)
        .map(|a| rf[a] * (1.0 + eta * (tau - cost[a])).max(0.0))
        .collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Solves `log u + u = y` for `u > 0`.
fn solve_log_plus_linear(y: f64) -> f64 {
    // Newton on w = log u: w + e^w = y, convex and increasing.
    let mut w = if y < 1.0 { y } else { y.ln() };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w + ew - y;
        let step = f / (1.0 + ew);
        w -= step;
        if step.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    w.exp()
}

/// Finds `tau` with `sum p(tau) = 1` for increasing `p(tau)`, given a bracket,
/// by safeguarded Newton. Returns the normalized `p`.
fn solve_multiplier(p_of: impl Fn(f64) -> (Vec<f64>, f64), lo: f64, hi: f64) -> Vec<f64> {
    let (mut lo, mut hi) = (lo.min(hi), lo.max(hi));
    let mut tau = 0.5 * (lo + hi);
    let mut best = p_of(tau).0;
    for _ in 0..300 {
        let (p, dp) = p_of(tau);
        let g = p.iter().sum::<f64>() - 1.0;
        best = p;
        if g.abs() <= 1e-15 {
            break;
        }
        if g > 0.0 {
            hi = tau;
        } else {
            lo = tau;
        }
        let newton = if dp > 0.0 { tau - g / dp } else { f64::NAN };
        tau = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-16 * (1.0 + tau.abs()) {
            best = p_of(tau).0;
            break;
        }
    }
    let s: f64 = best.iter().sum();
    best.iter_mut().for_each(|v| *v /= s);
    best
}
