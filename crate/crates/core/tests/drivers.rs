mod common;

use gbpm::drivers::{
    choose_t0, exploitability_direct, online_to_batch, regret_suite, run, run_etc_in, run_greedy_sampling_in,
    t0_raw, Algorithm, PhaseTiming, PolicyEntry, ReferenceMode, RoundRecord, RunConfig, RunRecord, T0Mode, T0Params,
};
use gbpm::env::{LinkSpec, PreferenceWorld};
use gbpm::estimators::MleOptions;
use gbpm::game::{dual_gap, GameHandle, SolveOptions};
use gbpm::policy::Policy;
use gbpm::regularizers::{psi_value, RegKind, RegularizerSpec};
use gbpm::skewlin::SkewMatrix;
use nalgebra::DVector;

fn config(algorithm: Algorithm, horizon: u64, seed: u64) -> RunConfig {
    RunConfig {
        world: common::fixture_spec(7),
        regularizer: RegKind::ReverseKl,
        eta: 2.0,
        reference: ReferenceMode::Explore,
        horizon,
        algorithm,
        t0_mode: T0Mode::EtaAware,
        t0_constant: 0.02,
        delta: 0.1,
        seed,
        estimator: MleOptions::default(),
        lambda_scale: 1.0,
        solver: SolveOptions::default(),
        refit_stride: 0,
        gap_stride: 0,
    }
}

fn params(eta: f64, kappa: f64, c_min: f64) -> T0Params {
    T0Params { eta, beta: 2.0, r: 1.0, d: 4.0, delta: 0.1, kappa, c_min, constant: 1.0 }
}

fn assert_regret_invariants(rec: &RunRecord) {
    let mut prev = (0.0, 0.0);
    for r in &rec.rounds {
        assert!(r.cum_mbr >= prev.0 && r.cum_abr >= prev.1);
        assert!(r.cum_mbr <= r.cum_abr + 1e-12);
        prev = (r.cum_mbr, r.cum_abr);
    }
    let s = regret_suite(rec).unwrap();
    assert!(s.mn <= s.mbr + 1e-9, "{s:?}");
    assert!(s.an <= s.abr + 1e-9, "{s:?}");
    let o = online_to_batch(rec).unwrap();
    assert!(o.gap <= o.bound + 1e-8, "{o:?}");
    let direct = exploitability_direct(&rec.truth, &o.mixture).unwrap();
    assert!((direct - o.gap).abs() < 1e-9, "{direct} {}", o.gap);
}

#[test]
fn eta_aware_schedule_fixture() {
    let kappa = LinkSpec::logistic(1.0).kappa;
    assert_eq!(choose_t0(50_000, T0Mode::EtaAware, &params(2.0, kappa, 0.5)), 17_475);
    assert_eq!(choose_t0(50_000, T0Mode::EtaAware, &params(2.0, 0.19661, 0.5)), 17_475);
}

#[test]
fn schedule_scaling() {
    let p = params(1.0, 0.25, 0.5);
    let a = t0_raw(1000, T0Mode::EtaFree, &p);
    let b = t0_raw(8000, T0Mode::EtaFree, &p);
    assert!((b / a - 4.0).abs() < 1e-12);
    let q = params(4.0, 0.25, 0.5);
    let a = t0_raw(1000, T0Mode::EtaAware, &p);
    let b = t0_raw(1000, T0Mode::EtaAware, &q);
    assert!((b / a - 2.0).abs() < 1e-12);
}

#[test]
fn eta_aware_explores_less_at_large_horizons() {
    let p = params(1.0, 0.25, 0.5);
    for t in [10_000, 100_000, 1_000_000] {
        let aware = choose_t0(t, T0Mode::EtaAware, &p);
        let free = choose_t0(t, T0Mode::EtaFree, &p);
        assert!(aware < free, "T={t}: {aware} vs {free}");
    }
}

#[test]
fn schedule_clamps() {
    let p = params(1.0, 1e-6, 1e-3);
    assert_eq!(choose_t0(100, T0Mode::EtaFree, &p), 100);
    let tiny = T0Params { constant: 1e-12, ..params(1.0, 0.25, 0.5) };
    assert_eq!(choose_t0(100, T0Mode::EtaAware, &tiny), 1);
    let nan = T0Params { kappa: f64::NAN, ..p };
    assert_eq!(choose_t0(77, T0Mode::EtaAware, &nan), 77);
    assert_eq!(choose_t0(100, T0Mode::Manual(40), &p), 40);
}

#[test]
fn greedy_sampling_is_deterministic() {
    let cfg = config(Algorithm::Gs, 300, 5);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.rounds, b.rounds);
    assert_eq!(a.policies, b.policies);
    assert_eq!(a.estimates, b.estimates);
    let c = run(&config(Algorithm::Gs, 300, 6)).unwrap();
    assert_ne!(a.rounds, c.rounds);
}

#[test]
fn greedy_sampling_bookkeeping() {
    let rec = run(&config(Algorithm::Gs, 400, 1)).unwrap();
    assert_eq!(rec.rounds_played(), 400);
    assert!(rec.warm_start);
    assert_eq!(rec.rounds[0].max_policy, 0);
    assert!(rec.policies[0].policy.l1_distance(rec.world.explore_policy()).unwrap() == 0.0);
    for r in &rec.rounds {
        let truth = dual_gap(&rec.policies[r.max_policy].policy, &rec.truth).unwrap();
        assert!((r.gap_max - truth).abs() < 1e-12);
        assert!((rec.policies[r.max_policy].true_gap - truth).abs() < 1e-12);
        assert!(rec.policies[r.max_policy].solver_gap <= 1e-7);
    }
    assert_regret_invariants(&rec);
}

#[test]
fn greedy_sampling_learns_on_fixture() {
    let rec = run(&config(Algorithm::Gs, 2000, 3)).unwrap();
    let head: f64 = rec.rounds[..200].iter().map(|r| r.gap_max).sum::<f64>() / 200.0;
    let tail: f64 = rec.rounds[1800..].iter().map(|r| r.gap_max).sum::<f64>() / 200.0;
    assert!(tail < head, "{head} {tail}");
    let first = rec.estimates.first().unwrap().frob_err;
    let last = rec.estimates.last().unwrap().frob_err;
    assert!(last < first);
}

#[test]
fn etc_regret_decomposes_exactly() {
    let mut cfg = config(Algorithm::Etc, 3000, 2);
    cfg.t0_mode = T0Mode::Manual(500);
    cfg.estimator.mode = gbpm::estimators::MleMode::NuclearProx;
    cfg.lambda_scale = 0.005;
    let rec = run(&cfg).unwrap();
    let (explore, committed, t0) = rec.etc_decomposition().unwrap();
    assert_eq!(t0, 500);
    let total = explore + (3000 - t0) as f64 * committed;
    assert!((rec.mbr() - total).abs() < 1e-9, "{} {total}", rec.mbr());
    for r in &rec.rounds[500..] {
        assert_eq!(r.max_policy, rec.rounds[500].max_policy);
        assert_eq!(r.min_policy, r.max_policy);
    }
    assert_regret_invariants(&rec);
}

#[test]
fn etc_with_full_exploration_never_commits() {
    let mut cfg = config(Algorithm::Etc, 400, 2);
    cfg.t0_mode = T0Mode::Manual(400);
    cfg.estimator.mode = gbpm::estimators::MleMode::NuclearProx;
    let rec = run(&cfg).unwrap();
    let rho_gap = dual_gap(rec.world.explore_policy(), &rec.truth).unwrap();
    assert!(rec.rounds.iter().all(|r| r.max_policy == 0 && r.min_policy == 0));
    assert!((rec.mbr() - 400.0 * rho_gap.max(0.0)).abs() < 1e-9);
    let o = online_to_batch(&rec).unwrap();
    assert!(o.mixture.l1_distance(rec.world.explore_policy()).unwrap() < 1e-15);
}

#[test]
fn zero_model_gaps_are_pure_regularizer() {
    // with a constant game the gap is psi(pi)/eta, not zero
    let cfg = config(Algorithm::Gs, 300, 4);
    let world = common::fixture_world(7).with_theta(SkewMatrix::zeros(4)).unwrap();
    let rec = run_greedy_sampling_in(world, &cfg).unwrap();
    let reg = rec.truth.reg();
    for r in &rec.rounds {
        let p = &rec.policies[r.max_policy].policy;
        assert!((r.gap_max - psi_value(reg, p).unwrap() / 2.0).abs() < 1e-12);
        assert!(r.gap_min.abs() < 1e-10);
    }
    let mut etc = config(Algorithm::Etc, 300, 4);
    etc.t0_mode = T0Mode::Manual(300);
    etc.estimator.mode = gbpm::estimators::MleMode::NuclearProx;
    let world = common::fixture_world(7).with_theta(SkewMatrix::zeros(4)).unwrap();
    let rec = run_etc_in(world, &etc).unwrap();
    assert!(rec.mbr() <= 300.0 * 1e-10);
    assert!(online_to_batch(&rec).unwrap().gap <= 1e-7);
}

fn e(i: usize) -> DVector<f64> {
    DVector::from_fn(2, |k, _| if k == i { 1.0 } else { 0.0 })
}

#[test]
fn dominated_play_in_unregularized_game() {
    let c = 0.2;
    let theta = SkewMatrix::elementary(2, 0, 1, c).unwrap();
    let world = PreferenceWorld::new(
        vec![vec![e(0), e(1)]],
        vec![1.0],
        Policy::uniform(&[2]),
        LinkSpec::linear(0.5),
        theta.clone(),
    )
    .unwrap();
    let reg = RegularizerSpec::new(RegKind::ReverseKl, Policy::uniform(&[2]), f64::INFINITY, &[1.0]).unwrap();
    let truth = GameHandle::new(&world, &theta, &reg).unwrap();
    let d2 = Policy::point_mass(&[2], &[1]).unwrap();
    let t = 50u64;
    let gap = dual_gap(&d2, &truth).unwrap();
    let rounds: Vec<RoundRecord> = (1..=t)
        .map(|k| RoundRecord {
            t: k,
            context: 0,
            a1: 1,
            a2: 0,
            outcome: false,
            max_policy: 0,
            min_policy: 0,
            gap_max: gap,
            gap_min: gap,
            cum_mbr: k as f64 * gap,
            cum_abr: 2.0 * k as f64 * gap,
            est_frob_err: 0.0,
            est_op_err: 0.0,
        })
        .collect();
    let rec = RunRecord {
        algorithm: Algorithm::Gs,
        horizon: t,
        t0: None,
        refit_stride: 1,
        gap_stride: 1,
        warm_start: false,
        rounds,
        policies: vec![PolicyEntry { policy: d2, estimate: None, solver_gap: 0.0, true_gap: gap }],
        estimates: vec![],
        timing: PhaseTiming::default(),
        clamp_events: 0,
        world,
        truth,
    };
    let s = regret_suite(&rec).unwrap();
    assert!((s.mbr - t as f64 * c).abs() < 1e-12);
    assert!((s.mbr_unregularized - t as f64 * c).abs() < 1e-12);
    assert!((s.mn - t as f64 * c).abs() < 1e-12);
    assert!((s.an - 2.0 * t as f64 * c).abs() < 1e-12);
    let o = online_to_batch(&rec).unwrap();
    assert!((o.gap - 2.0 * c).abs() < 1e-12);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = config(Algorithm::Gs, 0, 1);
    assert!(run(&cfg).is_err());
    cfg.horizon = 10;
    cfg.eta = -1.0;
    assert!(run(&cfg).is_err());
    cfg.eta = 2.0;
    cfg.t0_mode = T0Mode::Manual(11);
    cfg.algorithm = Algorithm::Etc;
    assert!(run(&cfg).is_err());
    cfg.t0_mode = T0Mode::EtaFree;
    cfg.delta = 1.0;
    assert!(run(&cfg).is_err());
    let err = gbpm::drivers::run_greedy_sampling(&config(Algorithm::Etc, 10, 1)).unwrap_err();
    assert!(err.partial.is_none());
}

#[test]
fn strides() {
    let mut cfg = config(Algorithm::Gs, 20_000, 1);
    assert_eq!(cfg.effective_refit_stride(), 1);
    assert_eq!(cfg.effective_gap_stride(), 1);
    cfg.horizon = 60_000;
    assert_eq!(cfg.effective_refit_stride(), 10);
    assert_eq!(cfg.effective_gap_stride(), 10);
    cfg.refit_stride = 3;
    assert_eq!(cfg.effective_refit_stride(), 3);
    let mut small = config(Algorithm::Gs, 95, 1);
    small.gap_stride = 10;
    small.refit_stride = 5;
    let rec = run(&small).unwrap();
    let ts: Vec<u64> = rec.trace_rows().map(|r| r.t).collect();
    assert_eq!(ts, vec![1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95]);
    assert_eq!(rec.rounds.len(), 95);
    assert!(rec.estimates.len() <= 20);
}
