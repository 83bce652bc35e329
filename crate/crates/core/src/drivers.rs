//! Online learners and regret accounting.
//!
//! Both learners play against a simulator that knows `Theta*`, so every
//! round's dual gap is evaluated exactly in the true regularized game.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{generate_world, min_eig_design, sample_duel, PreferenceWorld, WorldSpec};
use crate::error::{GbpmError, Result};
use crate::estimators::{
    constrained_mle_from, lambda_schedule, nuclear_mle_from, DuelStats, MleMode, MleOptions,
};
use crate::game::{dual_gap, payoff, solve_sne_from, GameHandle, SolveOptions};
use crate::numeric::CompensatedSum;
use crate::policy::Policy;
use crate::regularizers::{psi_value, RegKind, RegularizerSpec};
use crate::skewlin::SkewMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Greedy sampling: max player plays the estimated equilibrium, min player explores.
    Gs,
    /// Explore-then-commit.
    Etc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum T0Mode {
    EtaAware,
    EtaFree,
    Manual(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// `pi_ref = rho`.
    Explore,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldSpec,
    pub regularizer: RegKind,
    /// Regularization strength; `inf` for the unregularized game.
    pub eta: f64,
    pub reference: ReferenceMode,
    pub horizon: u64,
    pub algorithm: Algorithm,
    pub t0_mode: T0Mode,
    /// Proportionality constant in the `T0` schedules.
    pub t0_constant: f64,
    pub delta: f64,
    pub seed: u64,
    pub estimator: MleOptions,
    /// Multiplier on the nuclear-norm weight from [`lambda_schedule`].
    pub lambda_scale: f64,
    pub solver: SolveOptions,
    /// Refit every `k` rounds; 0 selects 1 for `T <= 50_000` and 10 beyond.
    pub refit_stride: u64,
    /// Trace every `k`-th round; 0 selects 1 for `T <= 20_000` and 10 beyond.
    pub gap_stride: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.horizon == 0 {
            return Err(GbpmError::InvalidSpec("horizon must be >= 1".into()));
        }
        if !(self.eta > 0.0) {
            return Err(GbpmError::InvalidSpec(format!("eta must be positive, got {}", self.eta)));
        }
        if let T0Mode::Manual(t0) = self.t0_mode {
            if t0 == 0 || t0 > self.horizon {
                return Err(GbpmError::InvalidSpec(format!(
                    "manual T0 must lie in [1, {}], got {t0}",
                    self.horizon
                )));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(GbpmError::InvalidSpec(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.t0_constant > 0.0) || !(self.lambda_scale >= 0.0) {
            return Err(GbpmError::InvalidSpec("t0_constant must be > 0 and lambda_scale >= 0".into()));
        }
        self.estimator.validate()?;
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(GbpmError::InvalidSpec("solver tol and max_iter must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_refit_stride(&self) -> u64 {
        match self.refit_stride {
            0 if self.horizon <= 50_000 => 1,
            0 => 10,
            k => k,
        }
    }

    pub fn effective_gap_stride(&self) -> u64 {
        match self.gap_stride {
            0 if self.horizon <= 20_000 => 1,
            0 => 10,
            k => k,
        }
    }

    /// Regularizer over `world` as configured.
    pub fn regularizer_for(&self, world: &PreferenceWorld) -> Result<RegularizerSpec> {
        let reference = match self.reference {
            ReferenceMode::Explore => world.explore_policy().clone(),
            ReferenceMode::Uniform => Policy::uniform(&world.action_counts()),
        };
        RegularizerSpec::new(self.regularizer, reference, self.eta, world.context_dist())
    }
}

/// One simulated round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub context: usize,
    pub a1: usize,
    pub a2: usize,
    pub outcome: bool,
    pub max_policy: usize,
    pub min_policy: usize,
    pub gap_max: f64,
    pub gap_min: f64,
    pub cum_mbr: f64,
    pub cum_abr: f64,
    pub est_frob_err: f64,
    pub est_op_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateSnapshot {
    /// Round after which the estimate was fitted.
    pub round: u64,
    pub theta: SkewMatrix,
    pub frob_err: f64,
    pub op_err: f64,
    pub iterations: usize,
}

/// A policy that was played, with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEntry {
    pub policy: Policy,
    /// Index into `RunRecord::estimates`, or `None` for the exploration policy.
    pub estimate: Option<usize>,
    /// Dual gap in the estimated game (solver certificate); 0 for `rho`.
    pub solver_gap: f64,
    /// Dual gap in the true game.
    pub true_gap: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub estimation_secs: f64,
    pub solving_secs: f64,
    pub accounting_secs: f64,
    pub total_secs: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub t0: Option<u64>,
    pub refit_stride: u64,
    pub gap_stride: u64,
    pub warm_start: bool,
    pub rounds: Vec<RoundRecord>,
    pub policies: Vec<PolicyEntry>,
    pub estimates: Vec<EstimateSnapshot>,
    pub timing: PhaseTiming,
    pub clamp_events: u64,
    pub world: PreferenceWorld,
    pub truth: GameHandle,
}

impl RunRecord {
    pub fn mbr(&self) -> f64 {
        self.rounds.last().map(|r| r.cum_mbr).unwrap_or(0.0)
    }

    pub fn abr(&self) -> f64 {
        self.rounds.last().map(|r| r.cum_abr).unwrap_or(0.0)
    }

    pub fn rounds_played(&self) -> u64 {
        self.rounds.len() as u64
    }

    /// ETC decomposition `(exploration sum, committed gap, T0)`.
    pub fn etc_decomposition(&self) -> Option<(f64, f64, u64)> {
        let t0 = self.t0?;
        let mut explore = CompensatedSum::new();
        for r in self.rounds.iter().take(t0 as usize) {
            explore.add(r.gap_max.max(0.0));
        }
        let committed = self
            .rounds
            .get(t0 as usize)
            .map(|r| r.gap_max.max(0.0))
            .unwrap_or(0.0);
        Some((explore.value(), committed, t0))
    }

    /// Rounds that go into the trace.
    pub fn trace_rows(&self) -> impl Iterator<Item = &RoundRecord> {
        let stride = self.gap_stride.max(1);
        let last = self.rounds.len() as u64;
        self.rounds
            .iter()
            .filter(move |r| r.t % stride == 0 || r.t == last || r.t == 1)
    }
}

/// A failed run with whatever was recorded before the failure.
#[derive(Debug)]
pub struct RunError {
    pub partial: Option<Box<RunRecord>>,
    pub cause: GbpmError,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.partial {
            Some(p) => write!(f, "run aborted after {} rounds: {}", p.rounds.len(), self.cause),
            None => write!(f, "run could not start: {}", self.cause),
        }
    }
}

impl std::error::Error for RunError {}

impl From<GbpmError> for RunError {
    fn from(cause: GbpmError) -> Self {
        RunError { partial: None, cause }
    }
}

pub type RunResult = std::result::Result<RunRecord, RunError>;

/// Parameters of the `T0` schedules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct T0Params {
    pub eta: f64,
    pub beta: f64,
    pub r: f64,
    pub d: f64,
    pub delta: f64,
    pub kappa: f64,
    pub c_min: f64,
    /// Proportionality constant.
    pub constant: f64,
}

/// `T0` before rounding and clamping.
pub fn t0_raw(horizon: u64, mode: T0Mode, p: &T0Params) -> f64 {
    let t = horizon as f64;
    let log_term = (p.d / p.delta).ln();
    match mode {
        T0Mode::Manual(n) => n as f64,
        T0Mode::EtaAware => {
            p.constant / p.kappa / (p.c_min * p.c_min) * (t * p.eta * p.beta * p.r * log_term).sqrt()
        }
        T0Mode::EtaFree => {
            p.constant
                * (t * t * p.r * log_term / (p.kappa * p.kappa * p.c_min.powi(4))).cbrt()
        }
    }
}

/// Schedule parameters of `cfg` on `world`: `kappa` from the link, `C_min`
/// from the exploration design, `beta` from the regularizer.
pub fn t0_params(cfg: &RunConfig, world: &PreferenceWorld) -> Result<T0Params> {
    let reg = cfg.regularizer_for(world)?;
    Ok(T0Params {
        eta: cfg.eta,
        beta: reg.beta(),
        r: (cfg.world.rank_bound / 2) as f64,
        d: world.dim() as f64,
        delta: cfg.delta,
        kappa: world.link().kappa,
        c_min: min_eig_design(world),
        constant: cfg.t0_constant,
    })
}

/// Exploration budget: the schedule value, rounded and clamped to `[1, T]`.
pub fn choose_t0(horizon: u64, mode: T0Mode, p: &T0Params) -> u64 {
    let raw = t0_raw(horizon, mode, p);
    if raw.is_nan() {
        return horizon;
    }
    (raw.round().max(1.0).min(horizon as f64)) as u64
}

pub fn run_greedy_sampling(cfg: &RunConfig) -> RunResult {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Gs {
        return Err(GbpmError::InvalidSpec("config algorithm is not gs".into()).into());
    }
    let world = generate_world(&cfg.world)?;
    run_greedy_sampling_in(world, cfg)
}

pub fn run_etc(cfg: &RunConfig) -> RunResult {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Etc {
        return Err(GbpmError::InvalidSpec("config algorithm is not etc".into()).into());
    }
    let world = generate_world(&cfg.world)?;
    run_etc_in(world, cfg)
}

/// Dispatches on `cfg.algorithm`.
pub fn run(cfg: &RunConfig) -> RunResult {
    match cfg.algorithm {
        Algorithm::Gs => run_greedy_sampling(cfg),
        Algorithm::Etc => run_etc(cfg),
    }
}

/// Running state shared by both learners.
struct Tracker {
    rounds: Vec<RoundRecord>,
    policies: Vec<PolicyEntry>,
    estimates: Vec<EstimateSnapshot>,
    mbr: CompensatedSum,
    abr: CompensatedSum,
    timing: PhaseTiming,
    started: Instant,
}

impl Tracker {
    fn new(rho: &Policy, truth: &GameHandle, horizon: u64) -> Result<Self> {
        let gap = dual_gap(rho, truth)?;
        Ok(Tracker {
            rounds: Vec::with_capacity(horizon as usize),
            policies: vec![PolicyEntry {
                policy: rho.clone(),
                estimate: None,
                solver_gap: 0.0,
                true_gap: gap,
            }],
            estimates: Vec::new(),
            mbr: CompensatedSum::new(),
            abr: CompensatedSum::new(),
            timing: PhaseTiming::default(),
            started: Instant::now(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, t: u64, x: usize, a1: usize, a2: usize, r: bool, p1: usize, p2: usize, err: (f64, f64)) {
        let g1 = self.policies[p1].true_gap;
        let g2 = self.policies[p2].true_gap;
        // rounding can leave an exact equilibrium at -1e-16
        self.mbr.add(g1.max(0.0));
        self.abr.add(g1.max(0.0) + g2.max(0.0));
        self.rounds.push(RoundRecord {
            t,
            context: x,
            a1,
            a2,
            outcome: r,
            max_policy: p1,
            min_policy: p2,
            gap_max: g1,
            gap_min: g2,
            cum_mbr: self.mbr.value(),
            cum_abr: self.abr.value(),
            est_frob_err: err.0,
            est_op_err: err.1,
        });
    }

    fn add_estimate(&mut self, round: u64, theta: SkewMatrix, truth: &SkewMatrix, iterations: usize) -> Result<(f64, f64)> {
        let e = truth.sub(&theta)?;
        let err = (e.frobenius_norm(), e.operator_norm());
        self.estimates.push(EstimateSnapshot {
            round,
            theta,
            frob_err: err.0,
            op_err: err.1,
            iterations,
        });
        Ok(err)
    }

    /// Solves the estimated game and registers the equilibrium as a new policy.
    fn add_equilibrium(
        &mut self,
        world: &PreferenceWorld,
        reg: &RegularizerSpec,
        truth: &GameHandle,
        warm: Option<&Policy>,
        opts: &SolveOptions,
    ) -> Result<usize> {
        let est = self.estimates.len() - 1;
        let t_solve = Instant::now();
        let game = GameHandle::new(world, &self.estimates[est].theta, reg)?;
        let sol = solve_sne_from(&game, warm, opts)?;
        self.timing.solving_secs += t_solve.elapsed().as_secs_f64();
        let t_acc = Instant::now();
        let gap = dual_gap(&sol.policy, truth)?;
        self.timing.accounting_secs += t_acc.elapsed().as_secs_f64();
        self.policies.push(PolicyEntry {
            policy: sol.policy,
            estimate: Some(est),
            solver_gap: sol.dual_gap_estimate,
            true_gap: gap,
        });
        Ok(self.policies.len() - 1)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        mut self,
        cfg: &RunConfig,
        world: PreferenceWorld,
        truth: GameHandle,
        t0: Option<u64>,
        refit_stride: u64,
    ) -> RunRecord {
        self.timing.total_secs = self.started.elapsed().as_secs_f64();
        RunRecord {
            algorithm: cfg.algorithm,
            horizon: cfg.horizon,
            t0,
            refit_stride,
            gap_stride: cfg.effective_gap_stride(),
            warm_start: cfg.algorithm == Algorithm::Gs,
            rounds: self.rounds,
            policies: self.policies,
            estimates: self.estimates,
            timing: self.timing,
            clamp_events: world.clamp_events(),
            world,
            truth,
        }
    }
}

fn fail(tracker: Tracker, cfg: &RunConfig, world: PreferenceWorld, truth: GameHandle, t0: Option<u64>, stride: u64, cause: GbpmError) -> RunError {
    RunError {
        partial: Some(Box::new(tracker.finish(cfg, world, truth, t0, stride))),
        cause,
    }
}

/// Greedy sampling on a given world (the world's `Theta*` is the truth).
pub fn run_greedy_sampling_in(world: PreferenceWorld, cfg: &RunConfig) -> RunResult {
    cfg.validate()?;
    let reg = cfg.regularizer_for(&world)?;
    let truth = GameHandle::new(&world, world.theta_star(), &reg)?;
    let rho = world.explore_policy().clone();
    let theta_star = world.theta_star().clone();
    let link = *world.link();
    let s_bound = cfg.world.nuc_bound;
    let opts = MleOptions {
        mode: MleMode::ConstrainedBall,
        ..cfg.estimator
    };
    let stride = cfg.effective_refit_stride();
    let mut tr = Tracker::new(&rho, &truth, cfg.horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = DuelStats::new(world.dim());
    let mut current = 0usize;
    let mut err = (theta_star.frobenius_norm(), theta_star.operator_norm());
    let mut warm: Option<(SkewMatrix, f64)> = None;
    for t in 1..=cfg.horizon {
        let x = world.sample_context(&mut rng);
        let a1 = tr.policies[current].policy.sample(x, &mut rng);
        let a2 = rho.sample(x, &mut rng);
        let r = match sample_duel(&world, x, a1, a2, &mut rng) {
            Ok(r) => r,
            Err(e) => return Err(fail(tr, cfg, world, truth, None, stride, e)),
        };
        tr.record(t, x, a1, a2, r, current, 0, err);
        if let Err(e) = stats.add(x, a1, a2, world.feature(x, a1), world.feature(x, a2), r) {
            return Err(fail(tr, cfg, world, truth, None, stride, e));
        }
        if t == cfg.horizon || t % stride != 0 {
            continue;
        }
        let t_est = Instant::now();
        let fit = constrained_mle_from(
            &stats,
            s_bound,
            &link,
            &opts,
            warm.as_ref().map(|(th, st)| (th, *st)),
        );
        tr.timing.estimation_secs += t_est.elapsed().as_secs_f64();
        let fit = match fit {
            Ok(f) => f,
            Err(e) => return Err(fail(tr, cfg, world, truth, None, stride, e)),
        };
        warm = Some((fit.theta.clone(), fit.step));
        err = match tr.add_estimate(t, fit.theta, &theta_star, fit.iterations) {
            Ok(e) => e,
            Err(e) => return Err(fail(tr, cfg, world, truth, None, stride, e)),
        };
        let prev = tr.policies[current].policy.clone();
        current = match tr.add_equilibrium(&world, &reg, &truth, Some(&prev), &cfg.solver) {
            Ok(id) => id,
            Err(e) => return Err(fail(tr, cfg, world, truth, None, stride, e)),
        };
    }
    Ok(tr.finish(cfg, world, truth, None, stride))
}

/// Explore-then-commit on a given world.
pub fn run_etc_in(world: PreferenceWorld, cfg: &RunConfig) -> RunResult {
    cfg.validate()?;
    let reg = cfg.regularizer_for(&world)?;
    let truth = GameHandle::new(&world, world.theta_star(), &reg)?;
    let rho = world.explore_policy().clone();
    let theta_star = world.theta_star().clone();
    let link = *world.link();
    let t0 = choose_t0(cfg.horizon, cfg.t0_mode, &t0_params(cfg, &world)?);
    let mut tr = Tracker::new(&rho, &truth, cfg.horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = DuelStats::new(world.dim());
    let prior_err = (theta_star.frobenius_norm(), theta_star.operator_norm());
    for t in 1..=t0 {
        let x = world.sample_context(&mut rng);
        let a1 = rho.sample(x, &mut rng);
        let a2 = rho.sample(x, &mut rng);
        let r = match sample_duel(&world, x, a1, a2, &mut rng) {
            Ok(r) => r,
            Err(e) => return Err(fail(tr, cfg, world, truth, Some(t0), 0, e)),
        };
        tr.record(t, x, a1, a2, r, 0, 0, prior_err);
        if let Err(e) = stats.add(x, a1, a2, world.feature(x, a1), world.feature(x, a2), r) {
            return Err(fail(tr, cfg, world, truth, Some(t0), 0, e));
        }
    }
    if t0 == cfg.horizon {
        return Ok(tr.finish(cfg, world, truth, Some(t0), 0));
    }
    let lambda = match lambda_schedule(t0, cfg.delta, link.l_mu, world.dim()) {
        Ok(l) => l * cfg.lambda_scale,
        Err(e) => return Err(fail(tr, cfg, world, truth, Some(t0), 0, e)),
    };
    let opts = MleOptions {
        mode: MleMode::NuclearProx,
        ..cfg.estimator
    };
    let t_est = Instant::now();
    let fit = nuclear_mle_from(&stats, lambda, &link, &opts, None);
    tr.timing.estimation_secs += t_est.elapsed().as_secs_f64();
    let fit = match fit {
        Ok(f) => f,
        Err(e) => return Err(fail(tr, cfg, world, truth, Some(t0), 0, e)),
    };
    let err = match tr.add_estimate(t0, fit.theta, &theta_star, fit.iterations) {
        Ok(e) => e,
        Err(e) => return Err(fail(tr, cfg, world, truth, Some(t0), 0, e)),
    };
    let committed = match tr.add_equilibrium(&world, &reg, &truth, None, &cfg.solver) {
        Ok(id) => id,
        Err(e) => return Err(fail(tr, cfg, world, truth, Some(t0), 0, e)),
    };
    for t in (t0 + 1)..=cfg.horizon {
        let x = world.sample_context(&mut rng);
        let p = &tr.policies[committed].policy;
        let a1 = p.sample(x, &mut rng);
        let a2 = p.sample(x, &mut rng);
        let r = match sample_duel(&world, x, a1, a2, &mut rng) {
            Ok(r) => r,
            Err(e) => return Err(fail(tr, cfg, world, truth, Some(t0), 0, e)),
        };
        tr.record(t, x, a1, a2, r, committed, committed, err);
    }
    Ok(tr.finish(cfg, world, truth, Some(t0), 0))
}

/// The five regret notions of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretSuite {
    pub mbr: f64,
    pub abr: f64,
    pub an: f64,
    pub mn: f64,
    pub mbr_unregularized: f64,
}

/// Uniform mixture of the policies a player used, and the sum of their
/// `psi` values over rounds.
fn player_average(record: &RunRecord, max_player: bool) -> Result<(Policy, f64)> {
    let mut counts = vec![0.0; record.policies.len()];
    for r in &record.rounds {
        counts[if max_player { r.max_policy } else { r.min_policy }] += 1.0;
    }
    let used: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0.0).collect();
    let refs: Vec<&Policy> = used.iter().map(|&i| &record.policies[i].policy).collect();
    let w: Vec<f64> = used.iter().map(|&i| counts[i]).collect();
    let mix = Policy::mixture(&refs, &w)?;
    let reg = record.truth.reg();
    let mut psi_sum = CompensatedSum::new();
    if !reg.is_unregularized() {
        for (&i, &c) in used.iter().zip(&w) {
            psi_sum.add(c * psi_value(reg, &record.policies[i].policy)?);
        }
    }
    Ok((mix, psi_sum.value()))
}

/// MBR, ABR, average-Nash, max-Nash and unregularized MBR regrets.
///
/// The Nash regrets use bilinearity of `J`: the fixed comparator faces the
/// uniform mixture of the opponent's policies, so one best response each
/// suffices.
pub fn regret_suite(record: &RunRecord) -> Result<RegretSuite> {
    let t = record.rounds.len() as f64;
    if record.rounds.is_empty() {
        return Ok(RegretSuite {
            mbr: 0.0,
            abr: 0.0,
            an: 0.0,
            mn: 0.0,
            mbr_unregularized: 0.0,
        });
    }
    let h = &record.truth;
    let ie = h.reg().inv_eta();
    let (bar1, psi1) = player_average(record, true)?;
    let (bar2, psi2) = player_average(record, false)?;
    let psi_bar = |p: &Policy| -> Result<f64> {
        if ie > 0.0 {
            psi_value(h.reg(), p)
        } else {
            Ok(0.0)
        }
    };
    let g1 = dual_gap(&bar1, h)?;
    let g2 = dual_gap(&bar2, h)?;
    let mn = t * g1 + ie * (psi1 - t * psi_bar(&bar1)?);
    let an = t * (g1 + g2) + ie * (psi1 - t * psi_bar(&bar1)?) + ie * (psi2 - t * psi_bar(&bar2)?);
    let unreg = h.with_reg(&h.reg().with_eta(f64::INFINITY)?)?;
    let mut counts = vec![0.0; record.policies.len()];
    for r in &record.rounds {
        counts[r.max_policy] += 1.0;
    }
    let mut mbr0 = CompensatedSum::new();
    for (i, &c) in counts.iter().enumerate() {
        if c > 0.0 {
            mbr0.add(c * dual_gap(&record.policies[i].policy, &unreg)?.max(0.0));
        }
    }
    Ok(RegretSuite {
        mbr: record.mbr(),
        abr: record.abr(),
        an,
        mn,
        mbr_unregularized: mbr0.value(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineToBatch {
    pub mixture: Policy,
    /// `max_pi J_eta(pi, bar) - J_eta(bar, pi)`, which equals `2 DGap(bar)`.
    pub gap: f64,
    /// `2 MBR / T`.
    pub bound: f64,
}

/// Uniform mixture of the max player's policies and its certified gap.
pub fn online_to_batch(record: &RunRecord) -> Result<OnlineToBatch> {
    if record.rounds.is_empty() {
        return Err(GbpmError::InvalidSpec("empty run".into()));
    }
    let (mix, _) = player_average(record, true)?;
    let h = &record.truth;
    // J_eta(pi, bar) - J_eta(bar, pi) = 1 - 2 J_eta(bar, pi) by skew symmetry
    let gap = 2.0 * dual_gap(&mix, h)?;
    let t = record.rounds.len() as f64;
    Ok(OnlineToBatch {
        mixture: mix,
        gap,
        bound: 2.0 * record.mbr() / t,
    })
}

/// `max_pi {J_eta(pi, bar) - J_eta(bar, pi)}` evaluated directly from its
/// definition with the max player's own best response.
pub fn exploitability_direct(h: &GameHandle, bar: &Policy) -> Result<f64> {
    let br_max = crate::game::max_best_response(h, bar)?;
    let br_min = crate::game::best_response(h, bar)?;
    let ie = h.reg().inv_eta();
    let psi = |p: &Policy| -> Result<f64> { if ie > 0.0 { psi_value(h.reg(), p) } else { Ok(0.0) } };
    let up = payoff(h, &br_max, bar)? - ie * psi(&br_max)? + ie * psi(bar)?;
    let down = payoff(h, bar, &br_min)? - ie * psi(bar)? + ie * psi(&br_min)?;
    Ok(up - down)
}
