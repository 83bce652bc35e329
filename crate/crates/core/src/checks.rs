//! Executable versions of the lemma-level inequalities.
//!
//! Every expectation is an exact finite sum over contexts and actions, so a
//! verdict never depends on Monte Carlo noise. Randomized sweeps take an
//! explicit seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::drivers::RunRecord;
use crate::env::{generate_world, min_eig_design, FeatureMode, LinkKind, LinkSpec, PreferenceWorld, WorldSpec};
use crate::error::{GbpmError, Result};
use crate::game::{dual_gap, solve_sne, GameHandle};
use crate::policy::Policy;
use crate::regularizers::{RegKind, RegularizerSpec};
use crate::skewlin::SkewMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    pub violations: usize,
    /// Smallest `bound + tolerance - value` seen; negative iff violated.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        CheckReport {
            name: name.into(),
            instances: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            tolerance,
            pass: true,
        }
    }

    /// Records one instance of `value <= bound` with the given allowance.
    pub fn observe(&mut self, value: f64, bound: f64, allowance: f64) {
        self.instances += 1;
        let margin = bound + allowance - value;
        // NaN margins count as violations
        if !(margin >= 0.0) {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
        self.pass = self.violations == 0;
    }

    /// Records one instance of the strict inequality `value < bound`.
    pub fn observe_strict(&mut self, value: f64, bound: f64) {
        self.instances += 1;
        let margin = bound - value;
        if !(margin > 0.0) {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
        self.pass = self.violations == 0;
    }

    pub fn merge(&mut self, other: &CheckReport) {
        self.instances += other.instances;
        self.violations += other.violations;
        if other.worst_margin < self.worst_margin || other.worst_margin.is_nan() {
            self.worst_margin = other.worst_margin;
        }
        self.pass = self.violations == 0;
    }
}

fn random_skew<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> SkewMatrix {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let a = (&g - g.transpose()) * 0.5;
    let n = a.norm();
    let m = if n > 0.0 { a * (scale / n) } else { a };
    SkewMatrix::from_matrix(m).expect("antisymmetric by construction")
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    // occasionally sparse, to exercise the simplex boundary
    let mut v: Vec<f64> = (0..k)
        .map(|_| {
            if rng.gen_bool(0.15) {
                0.0
            } else {
                -rng.gen::<f64>().max(1e-300).ln()
            }
        })
        .collect();
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        v = vec![0.0; k];
        v[rng.gen_range(0..k)] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|p| *p /= s);
    v
}

fn random_unit_ball<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    let g = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    let n = g.norm();
    let r: f64 = rng.gen::<f64>().powf(1.0 / d as f64);
    if n > 0.0 {
        g * (r / n)
    } else {
        g
    }
}

fn random_world<R: Rng + ?Sized>(rng: &mut R, dims: &[usize], link: LinkKind) -> Result<PreferenceWorld> {
    let d = dims[rng.gen_range(0..dims.len())];
    let rank_bound = 2 * rng.gen_range(1..=(d / 2).max(1));
    let nuc_bound = match link {
        LinkKind::Logistic => rng.gen_range(0.2..3.0),
        LinkKind::Linear => rng.gen_range(0.05..0.5),
    };
    let modes = [FeatureMode::SimplexCorners, FeatureMode::RandomUnitSphere, FeatureMode::HypercubeScaled];
    let feature_mode = modes[rng.gen_range(0..modes.len())];
    let max_k = if feature_mode == FeatureMode::SimplexCorners { d + d * (d - 1) / 2 } else { 8 };
    let spec = WorldSpec {
        dim: d,
        rank_bound,
        nuc_bound,
        link,
        n_contexts: rng.gen_range(1..=3),
        n_actions: rng.gen_range(2..=max_k.min(8)),
        feature_mode,
        seed: rng.gen(),
    };
    generate_world(&spec)
}

/// Quantities of the quadratic dual-gap bound for one greedy policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualGapBoundTerms {
    /// True dual gap of the policy.
    pub gap: f64,
    /// `E_{phi ~ pi} ||E phi||^2`.
    pub sq_mean: f64,
    /// `E_{phi ~ pi} ||E phi||`.
    pub abs_mean: f64,
    /// `(L^2 eta beta + L) sq_mean`.
    pub bound_quadratic: f64,
    /// `(L/2)(abs_mean + sq_mean)`.
    pub bound_linear: f64,
}

/// Evaluates both sides for `policy` with `E = Theta* - theta_hat`.
pub fn dual_gap_bound_terms(
    world: &PreferenceWorld,
    theta_hat: &SkewMatrix,
    policy: &Policy,
    truth: &GameHandle,
) -> Result<DualGapBoundTerms> {
    let e = world.theta_star().sub(theta_hat)?;
    let gap = dual_gap(policy, truth)?;
    let mut sq = 0.0;
    let mut ab = 0.0;
    for x in 0..world.n_contexts() {
        let w = world.context_dist()[x];
        for (a, &p) in policy.row(x).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let n = (e.matrix() * world.feature(x, a)).norm();
            sq += w * p * n * n;
            ab += w * p * n;
        }
    }
    let l = world.link().l_mu;
    let reg = truth.reg();
    let bound_quadratic = if reg.is_unregularized() {
        f64::INFINITY
    } else {
        (l * l * reg.eta() * reg.beta() + l) * sq
    };
    Ok(DualGapBoundTerms {
        gap,
        sq_mean: sq,
        abs_mean: ab,
        bound_quadratic,
        bound_linear: 0.5 * l * (ab + sq),
    })
}

/// Both dual-gap bounds for every greedy policy of a run. The allowance
/// per policy is `tol` plus twice its equilibrium certificate in the
/// estimated game.
pub fn check_dual_gap_bounds_record(record: &RunRecord, tol: f64) -> Result<(CheckReport, CheckReport)> {
    let mut quad = CheckReport::new("dual-gap-quadratic-bound", tol);
    let mut lin = CheckReport::new("dual-gap-linear-bound", tol);
    for entry in &record.policies {
        let Some(i) = entry.estimate else { continue };
        let t = dual_gap_bound_terms(&record.world, &record.estimates[i].theta, &entry.policy, &record.truth)?;
        let allow = tol + 2.0 * entry.solver_gap.max(0.0);
        quad.observe(t.gap, t.bound_quadratic, allow);
        lin.observe(t.gap, t.bound_linear, allow);
    }
    Ok((quad, lin))
}

/// Random `(Theta*, Theta_hat)` pairs on random worlds; each `Theta_hat`
/// is `Theta*` plus a skew perturbation with log-uniform size.
pub fn check_dual_gap_bounds_random(n: usize, seed: u64, kind: RegKind, eta: f64, tol: f64) -> Result<(CheckReport, CheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quad = CheckReport::new("dual-gap-quadratic-bound-random", tol);
    let mut lin = CheckReport::new("dual-gap-linear-bound-random", tol);
    let solver_tol = 1e-10;
    for _ in 0..n {
        let link = if rng.gen_bool(0.5) { LinkKind::Logistic } else { LinkKind::Linear };
        let world = random_world(&mut rng, &[2, 3, 4, 6], link)?;
        let scale = 10f64.powf(rng.gen_range(-3.0..0.3));
        let pert = random_skew(&mut rng, world.dim(), scale);
        let theta_hat = world.theta_star().add(&pert)?;
        let reg = RegularizerSpec::new(kind, world.explore_policy().clone(), eta, world.context_dist())?;
        let est_game = GameHandle::new(&world, &theta_hat, &reg)?;
        let sol = solve_sne(&est_game, solver_tol, 200_000)?;
        let truth = GameHandle::new(&world, world.theta_star(), &reg)?;
        let t = dual_gap_bound_terms(&world, &theta_hat, &sol.policy, &truth)?;
        let allow = tol + 2.0 * sol.dual_gap_estimate.max(0.0);
        quad.observe(t.gap, t.bound_quadratic, allow);
        lin.observe(t.gap, t.bound_linear, allow);
    }
    Ok((quad, lin))
}

/// Terms of the cancellation lemma on one context.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CancellationTerms {
    /// `E_{phi, phi' ~ p_hat}[mu'(phi^T Theta phi') phi^T E phi']`.
    pub z: f64,
    /// `|E_{phi ~ p_hat, phi' ~ p_tilde}[mu'(phi^T Theta phi') phi^T E phi']|`.
    pub lhs: f64,
    /// `(L/2) ||p_hat - p_tilde||_1 E_{phi ~ p_hat} ||E phi||`.
    pub rhs: f64,
}

pub fn cancellation_terms(
    features: &[DVector<f64>],
    p_hat: &[f64],
    p_tilde: &[f64],
    theta: &SkewMatrix,
    e: &SkewMatrix,
    link: &LinkSpec,
) -> Result<CancellationTerms> {
    let k = features.len();
    if p_hat.len() != k || p_tilde.len() != k {
        return Err(GbpmError::Dimension("policy length differs from action count".into()));
    }
    if theta.dim() != e.dim() || features.iter().any(|f| f.len() != theta.dim()) {
        return Err(GbpmError::Dimension("feature and matrix dimensions differ".into()));
    }
    let mut z = 0.0;
    let mut cross = 0.0;
    let mut en = 0.0;
    for a in 0..k {
        let ephi = e.matrix() * &features[a];
        en += p_hat[a] * ephi.norm();
        for b in 0..k {
            let f = link.mu_dot(theta.bilinear(&features[a], &features[b])) * e.bilinear(&features[a], &features[b]);
            z += p_hat[a] * p_hat[b] * f;
            cross += p_hat[a] * p_tilde[b] * f;
        }
    }
    let l1: f64 = p_hat.iter().zip(p_tilde).map(|(a, b)| (a - b).abs()).sum();
    Ok(CancellationTerms {
        z,
        lhs: cross.abs(),
        rhs: 0.5 * link.l_mu * l1 * en,
    })
}

/// Cancellation (`|Z| <= 1e-10`) and the l1-weighted bound (at `tol`) on
/// every context of `world`.
pub fn check_cancellation(
    world: &PreferenceWorld,
    p_hat: &Policy,
    p_tilde: &Policy,
    theta: &SkewMatrix,
    e: &SkewMatrix,
    tol: f64,
) -> Result<(CheckReport, CheckReport)> {
    let mut zr = CheckReport::new("skew-cancellation", 1e-10);
    let mut br = CheckReport::new("l1-weighted-cross-bound", tol);
    for x in 0..world.n_contexts() {
        let t = cancellation_terms(&world.features()[x], p_hat.row(x), p_tilde.row(x), theta, e, world.link())?;
        zr.observe(t.z.abs(), 0.0, 1e-10);
        br.observe(t.lhs, t.rhs, tol);
    }
    Ok((zr, br))
}

/// `n` random single-context instances with features in the unit ball.
pub fn check_cancellation_random(n: usize, seed: u64, tol: f64) -> Result<(CheckReport, CheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut zr = CheckReport::new("skew-cancellation-random", 1e-10);
    let mut br = CheckReport::new("l1-weighted-cross-bound-random", tol);
    for _ in 0..n {
        let d = rng.gen_range(2..=6);
        let k = rng.gen_range(2..=8);
        let link = if rng.gen_bool(0.5) { LinkSpec::logistic(1.0) } else { LinkSpec::linear(0.5) };
        let features: Vec<DVector<f64>> = (0..k).map(|_| random_unit_ball(&mut rng, d)).collect();
        let ts = rng.gen_range(0.0..3.0);
        let theta = random_skew(&mut rng, d, ts);
        let es = rng.gen_range(0.0..2.0);
        let e = if rng.gen_bool(0.05) { SkewMatrix::zeros(d) } else { random_skew(&mut rng, d, es) };
        let p = random_simplex(&mut rng, k);
        let q = random_simplex(&mut rng, k);
        let t = cancellation_terms(&features, &p, &q, &theta, &e, &link)?;
        zr.observe(t.z.abs(), 0.0, 1e-10);
        br.observe(t.lhs, t.rhs, tol);
    }
    Ok((zr, br))
}

fn basis(d: usize, j: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[j] = 1.0;
    e
}

/// Symmetric part of `m` after checking it is PSD to within `1e-10`
/// relative to its scale.
fn require_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(GbpmError::Dimension("PSD matrix must be square".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let scale = sym.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-10 * scale {
        return Err(GbpmError::NotPsd { min_eig: f64::NAN });
    }
    let min_eig = sym.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-10 * scale {
        return Err(GbpmError::NotPsd { min_eig });
    }
    Ok(sym)
}

/// `(lhs, rhs, C_min)` for the coverage inequality
/// `sum_j vec(phi e_j^T)^T M vec(phi e_j^T) <= C_min^{-1} E_{phi' ~ rho} vec(phi phi'^T)^T M vec(phi phi'^T)`,
/// with `rho` drawn through the world's context distribution.
pub fn coverage_terms(m: &DMatrix<f64>, phi: &DVector<f64>, world: &PreferenceWorld) -> Result<(f64, f64, f64)> {
    let d = world.dim();
    if phi.len() != d || m.nrows() != d * d {
        return Err(GbpmError::Dimension(format!(
            "coverage needs a {0}-vector and a {1}x{1} matrix",
            d,
            d * d
        )));
    }
    let m = require_psd(m)?;
    let quad = |v: &DVector<f64>| (v.transpose() * &m * v)[(0, 0)];
    let mut lhs = 0.0;
    for j in 0..d {
        lhs += quad(&basis(d, j).kronecker(phi));
    }
    let mut expect = 0.0;
    for x in 0..world.n_contexts() {
        let w = world.context_dist()[x];
        for (b, &p) in world.explore_policy().row(x).iter().enumerate() {
            if p > 0.0 {
                expect += w * p * quad(&world.feature(x, b).kronecker(phi));
            }
        }
    }
    let c_min = min_eig_design(world);
    let rhs = if c_min > 0.0 { expect / c_min } else { f64::INFINITY };
    Ok((lhs, rhs, c_min))
}

pub fn check_coverage_kron(m: &DMatrix<f64>, phi: &DVector<f64>, world: &PreferenceWorld, tol: f64) -> Result<CheckReport> {
    let (lhs, rhs, _) = coverage_terms(m, phi, world)?;
    let mut r = CheckReport::new("coverage", tol);
    r.observe(lhs, rhs, tol * (1.0 + rhs.abs().min(1e12)));
    Ok(r)
}

fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let k = rng.gen_range(1..=n);
    let g = DMatrix::<f64>::from_fn(n, k, |_, _| StandardNormal.sample(rng));
    &g * g.transpose()
}

/// Coverage inequality on `n` random (PSD matrix, feature, world) draws.
pub fn check_coverage_random(n: usize, seed: u64, tol: f64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = CheckReport::new("coverage-random", tol);
    for _ in 0..n {
        let world = random_world(&mut rng, &[2, 3, 4], LinkKind::Logistic)?;
        let d = world.dim();
        let m = random_psd(&mut rng, d * d);
        let phi = if rng.gen_bool(0.05) { DVector::zeros(d) } else { random_unit_ball(&mut rng, d) };
        r.merge(&check_coverage_kron(&m, &phi, &world, tol)?);
    }
    Ok(r)
}

/// Kronecker ordering `A (x) B >= A (x) C` for `A >= 0`, `B >= C >= 0`:
/// the smallest eigenvalue of the difference is compared against `-tol`.
/// When `A` and `B` have the same size, `tr(AB) >= tr(AC)` is checked too.
pub fn check_kron_order(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> Result<CheckReport> {
    let a = require_psd(a)?;
    let c = require_psd(c)?;
    let diff = require_psd(&(b - &c))?;
    let mut r = CheckReport::new("kronecker-order", tol);
    let k = a.kronecker(b) - a.kronecker(&c);
    let k = (&k + k.transpose()) * 0.5;
    let min_eig = k.symmetric_eigen().eigenvalues.min();
    r.observe(-min_eig, 0.0, tol);
    if a.nrows() == diff.nrows() {
        let tr = (&a * &diff).trace();
        r.observe(-tr, 0.0, tol);
    }
    Ok(r)
}

pub fn check_kron_random(n: usize, seed: u64, tol: f64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = CheckReport::new("kronecker-order-random", tol);
    for _ in 0..n {
        let na = rng.gen_range(1..=4);
        let nb = if rng.gen_bool(0.5) { na } else { rng.gen_range(1..=4) };
        let a = random_psd(&mut rng, na);
        let c = random_psd(&mut rng, nb);
        let b = &c + random_psd(&mut rng, nb);
        r.merge(&check_kron_order(&a, &b, &c, tol)?);
    }
    Ok(r)
}

/// Claimed bound on `max_a pi(a) / pi_ref(a)` at a regularized equilibrium.
pub fn density_ratio_bound(kind: RegKind, eta: f64) -> Result<f64> {
    match kind {
        RegKind::ReverseKl => Ok(eta.exp()),
        RegKind::ChiSquared => Ok(eta),
        RegKind::MixedKlChi => Ok(1.0 + eta),
        other => Err(GbpmError::Domain(format!(
            "no density-ratio bound for regularizer {}",
            other.name()
        ))),
    }
}

/// Largest `pi(a) / ref(a)` over contexts and actions.
pub fn max_density_ratio(pi: &Policy, reference: &Policy) -> Result<f64> {
    pi.check_shape(&reference.action_counts())?;
    let mut worst: f64 = 0.0;
    for (p, r) in pi.rows().iter().zip(reference.rows()) {
        for (&a, &b) in p.iter().zip(r) {
            if a > 0.0 {
                if b <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                worst = worst.max(a / b);
            }
        }
    }
    Ok(worst)
}

/// Per-context density ratios of `sne` against the claimed bound, with
/// multiplicative slack `1 + slack`.
pub fn check_density_ratio(sne: &Policy, reg: &RegularizerSpec, slack: f64) -> Result<CheckReport> {
    let h = density_ratio_bound(reg.kind(), reg.eta())?;
    let mut r = CheckReport::new(format!("density-ratio-{}", reg.kind().name()), slack);
    for x in 0..sne.n_contexts() {
        let row = Policy::new(vec![sne.row(x).to_vec()])?;
        let rf = Policy::new(vec![reg.reference().row(x).to_vec()])?;
        let ratio = max_density_ratio(&row, &rf)?;
        r.observe(ratio, h, h * slack);
    }
    Ok(r)
}

/// `n` solved equilibria of random games under `kind` at strength `eta`.
/// Worlds use the logistic link and up to 8 actions.
pub fn check_density_ratio_random(n: usize, seed: u64, kind: RegKind, eta: f64, slack: f64) -> Result<CheckReport> {
    density_ratio_bound(kind, eta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = CheckReport::new(format!("density-ratio-{}-eta{}", kind.name(), eta), slack);
    for _ in 0..n {
        let world = random_world(&mut rng, &[2, 4, 6, 8], LinkKind::Logistic)?;
        let reg = RegularizerSpec::new(kind, world.explore_policy().clone(), eta, world.context_dist())?;
        let h = GameHandle::new(&world, world.theta_star(), &reg)?;
        let sol = solve_sne(&h, 1e-10, 200_000)?;
        r.merge(&check_density_ratio(&sol.policy, &reg, slack)?);
    }
    Ok(r)
}

/// Confidence radius `S^5 + S log(1/delta) + S d^2 log(S t / d)`, up to
/// constants.
pub fn confidence_radius(t: f64, delta: f64, s: f64, d: f64, _kappa: f64) -> Result<f64> {
    if !(t > 0.0 && delta > 0.0 && delta < 1.0 && s > 0.0 && d > 0.0) {
        return Err(GbpmError::Domain("confidence radius needs positive inputs and delta in (0,1)".into()));
    }
    Ok(s.powi(5) + s * (1.0 / delta).ln() + s * d * d * (s * t / d).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticalPotential {
    pub sum: f64,
    /// `2 d log(1 + X^2 T / (d lambda))`, up to constants.
    pub bound: f64,
    pub pass: bool,
}

/// `sum_t min{1, ||x_t||^2_{V_t^{-1}}}` with `V_t = lambda I + sum_{s<t} x_s x_s^T`.
pub fn elliptical_potential_sum(vectors: &[DVector<f64>], lambda: f64) -> Result<EllipticalPotential> {
    if !(lambda > 0.0) {
        return Err(GbpmError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let Some(first) = vectors.first() else {
        return Ok(EllipticalPotential { sum: 0.0, bound: 0.0, pass: true });
    };
    let d = first.len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(GbpmError::Dimension("vectors of different lengths".into()));
    }
    // Sherman-Morrison keeps V^{-1} current
    let mut vinv = DMatrix::<f64>::identity(d, d) / lambda;
    let mut sum = 0.0;
    let mut x_max: f64 = 0.0;
    for v in vectors {
        let w = &vinv * v;
        let q = v.dot(&w);
        sum += q.min(1.0);
        vinv -= (&w * w.transpose()) / (1.0 + q);
        x_max = x_max.max(v.norm());
    }
    let t = vectors.len() as f64;
    let df = d as f64;
    let bound = 2.0 * df * (1.0 + x_max * x_max * t / (df * lambda)).ln();
    Ok(EllipticalPotential { sum, bound, pass: sum <= bound })
}

/// `(2 d^2 L^2 / kappa^2) log(1 + 4 kappa^2 S^2 T / (d^2 lambda))`.
pub fn eluder_upper_bound(d: f64, lambda: f64, t: f64, kappa: f64, l_mu: f64, s: f64) -> Result<f64> {
    if !(d > 0.0 && lambda > 0.0 && t >= 0.0 && kappa > 0.0 && l_mu > 0.0 && s > 0.0) {
        return Err(GbpmError::Domain("eluder bound needs positive inputs".into()));
    }
    Ok(2.0 * d * d * l_mu * l_mu / (kappa * kappa) * (1.0 + 4.0 * kappa * kappa * s * s * t / (d * d * lambda)).ln())
}

/// One element of the lower-bound witness: query pair and the alternative
/// parameter that separates it.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessElement {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub theta: SkewMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessReport {
    pub report: CheckReport,
    pub alpha: f64,
    pub k: u32,
    pub length: usize,
    /// `C(d,2) (k+1)`.
    pub expected_length: usize,
    /// Largest nuclear norm among the alternative parameters.
    pub max_nuclear_norm: f64,
    /// Largest unsquared prefix sum `sum_{s<t} x_s^T Theta_t y_s` relative to `alpha`.
    pub max_linear_prefix_ratio: f64,
}

/// The witness sequence for the linear link: for every basis pair `i < j`
/// and `t = 0..=k`, `x = 2^{t-k} e_i`, `y = 2^{t-k} e_j`,
/// `Theta = alpha 4^{k-t} (e_i e_j^T - e_j e_i^T)`, with `alpha = 1.5 eps`
/// and `k = floor(log_4(S / alpha))`.
pub fn eluder_witness(d: usize, s: f64, eps: f64) -> Result<(Vec<WitnessElement>, f64, u32)> {
    if d < 2 {
        return Err(GbpmError::Domain("witness needs d >= 2".into()));
    }
    if !(eps > 0.0) || eps >= s {
        return Err(GbpmError::Domain(format!("need 0 < eps < S, got eps = {eps}, S = {s}")));
    }
    let alpha = 1.5 * eps;
    let k = ((s / alpha).ln() / 4f64.ln()).floor().max(0.0) as u32;
    let mut seq = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            for t in 0..=k {
                let scale = 2f64.powi(t as i32 - k as i32);
                let c = alpha * 4f64.powi((k - t) as i32);
                seq.push(WitnessElement {
                    x: basis(d, i) * scale,
                    y: basis(d, j) * scale,
                    theta: SkewMatrix::elementary(d, i, j, c)?,
                });
            }
        }
    }
    Ok((seq, alpha, k))
}

/// Builds the witness and verifies, against `Theta* = 0` and the linear
/// link, that every element is separated by more than `eps` while the sum
/// of squared deviations on earlier elements stays below `eps^2`.
pub fn eluder_witness_check(d: usize, s: f64, eps: f64) -> Result<WitnessReport> {
    let (seq, alpha, k) = eluder_witness(d, s, eps)?;
    let link = LinkSpec::linear(s.max(0.5));
    let base = link.mu(0.0);
    let mut report = CheckReport::new("eluder-witness", 0.0);
    let mut max_nuc: f64 = 0.0;
    let mut max_lin: f64 = 0.0;
    for (n, el) in seq.iter().enumerate() {
        let sep = (link.mu(el.theta.bilinear(&el.x, &el.y)) - base).abs();
        report.observe_strict(eps, sep);
        let mut sq = 0.0;
        let mut lin = 0.0;
        for prev in &seq[..n] {
            let dev = link.mu(el.theta.bilinear(&prev.x, &prev.y)) - base;
            sq += dev * dev;
            lin += dev;
        }
        report.observe_strict(sq, eps * eps);
        max_nuc = max_nuc.max(el.theta.nuclear_norm());
        max_lin = max_lin.max(lin / alpha);
    }
    let pairs = d * (d - 1) / 2;
    Ok(WitnessReport {
        report,
        alpha,
        k,
        length: seq.len(),
        expected_length: pairs * (k as usize + 1),
        max_nuclear_norm: max_nuc,
        max_linear_prefix_ratio: max_lin,
    })
}
