mod common;

use gbpm::checks::{
    cancellation_terms, check_cancellation, check_cancellation_random, check_coverage_kron, check_coverage_random,
    check_density_ratio, check_density_ratio_random, check_dual_gap_bounds_random, check_dual_gap_bounds_record,
    check_kron_order, check_kron_random, confidence_radius, coverage_terms, density_ratio_bound,
    dual_gap_bound_terms, elliptical_potential_sum, eluder_upper_bound, eluder_witness_check, max_density_ratio,
    CheckReport,
};
use gbpm::drivers::{run, Algorithm, ReferenceMode, RunConfig, T0Mode};
use gbpm::env::{LinkSpec, PreferenceWorld};
use gbpm::estimators::MleOptions;
use gbpm::game::{solve_sne, GameHandle, SolveOptions};
use gbpm::policy::Policy;
use gbpm::regularizers::{RegKind, RegularizerSpec};
use gbpm::skewlin::SkewMatrix;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn e(d: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 })
}

fn orthonormal_world(d: usize) -> PreferenceWorld {
    PreferenceWorld::new(
        vec![(0..d).map(|i| e(d, i)).collect()],
        vec![1.0],
        Policy::uniform(&[d]),
        LinkSpec::logistic(1.0),
        SkewMatrix::elementary(d, 0, 1, 0.5).unwrap(),
    )
    .unwrap()
}

#[test]
fn report_bookkeeping() {
    let mut r = CheckReport::new("x", 1e-9);
    r.observe(1.0, 1.0, 0.0);
    assert!(r.pass);
    r.observe(1.0 + 1e-10, 1.0, 1e-9);
    assert!(r.pass);
    r.observe(2.0, 1.0, 1e-9);
    assert!(!r.pass);
    assert_eq!((r.instances, r.violations), (3, 1));
    assert!((r.worst_margin + 1.0).abs() < 1e-8);
    let mut s = CheckReport::new("y", 0.0);
    s.observe_strict(1.0, 1.0);
    assert!(!s.pass);
    s.observe(f64::NAN, 1.0, 0.0);
    assert_eq!(s.violations, 2);
    let mut m = CheckReport::new("z", 0.0);
    m.observe(0.0, 1.0, 0.0);
    m.merge(&r);
    assert_eq!((m.instances, m.violations), (4, 1));
    assert!(!m.pass);
}

#[test]
fn exact_estimate_makes_both_bounds_zero() {
    let w = common::fixture_world(7);
    let reg = RegularizerSpec::new(RegKind::ReverseKl, w.explore_policy().clone(), 2.0, w.context_dist()).unwrap();
    let truth = GameHandle::new(&w, w.theta_star(), &reg).unwrap();
    let sol = solve_sne(&truth, 1e-10, 10_000).unwrap();
    let t = dual_gap_bound_terms(&w, w.theta_star(), &sol.policy, &truth).unwrap();
    assert_eq!(t.sq_mean, 0.0);
    assert_eq!(t.bound_quadratic, 0.0);
    assert!(t.gap <= 1e-10);
}

#[test]
fn dual_gap_bounds_hold_on_a_greedy_run() {
    let cfg = RunConfig {
        world: common::fixture_spec(7),
        regularizer: RegKind::ReverseKl,
        eta: 2.0,
        reference: ReferenceMode::Explore,
        horizon: 1000,
        algorithm: Algorithm::Gs,
        t0_mode: T0Mode::EtaAware,
        t0_constant: 1.0,
        delta: 0.1,
        seed: 11,
        estimator: MleOptions::default(),
        lambda_scale: 1.0,
        solver: SolveOptions::default(),
        refit_stride: 0,
        gap_stride: 0,
    };
    let rec = run(&cfg).unwrap();
    let (q, l) = check_dual_gap_bounds_record(&rec, 1e-8).unwrap();
    assert!(q.pass && l.pass, "{q:?} {l:?}");
    assert_eq!(q.instances, rec.policies.len() - 1);
}

#[test]
fn dual_gap_bounds_hold_on_random_instances() {
    for (kind, eta) in [(RegKind::ReverseKl, 2.0), (RegKind::ChiSquared, 4.0), (RegKind::MixedKlChi, 1.0)] {
        let (q, l) = check_dual_gap_bounds_random(40, 3, kind, eta, 1e-8).unwrap();
        assert!(q.pass && l.pass, "{kind:?} {q:?} {l:?}");
        assert_eq!(q.instances, 40);
    }
}

#[test]
fn cross_bound_counterexample_needs_the_full_constant() {
    // linear link, Theta = 0, features e1, e2, -e2
    let features = vec![e(2, 0), e(2, 1), -e(2, 1)];
    let ee = SkewMatrix::elementary(2, 0, 1, 1.0).unwrap();
    let link = LinkSpec::linear(0.5);
    for s in [0.1, 0.3, 0.45] {
        let p_hat = [1.0 - s, 0.0, s];
        let p_tilde = [1.0 - s, s, 0.0];
        let t = cancellation_terms(&features, &p_hat, &p_tilde, &SkewMatrix::zeros(2), &ee, &link).unwrap();
        assert!((t.lhs - 2.0 * s * (1.0 - s)).abs() < 1e-15);
        assert!((t.rhs - s).abs() < 1e-15);
        assert!(t.lhs > t.rhs);
        assert!(t.lhs <= 2.0 * t.rhs);
    }
}

#[test]
fn cross_bound_cancellation_and_zero_error() {
    let w = common::fixture_world(2);
    let p = Policy::new(vec![vec![0.1, 0.2, 0.3, 0.1, 0.2, 0.1]]).unwrap();
    let q = Policy::uniform(&[6]);
    let ee = SkewMatrix::elementary(4, 1, 3, 0.7).unwrap();
    let (z, _) = check_cancellation(&w, &p, &q, w.theta_star(), &ee, 1e-9).unwrap();
    assert!(z.pass);
    let t = cancellation_terms(&w.features()[0], p.row(0), q.row(0), w.theta_star(), &SkewMatrix::zeros(4), w.link())
        .unwrap();
    assert_eq!((t.lhs, t.rhs, t.z), (0.0, 0.0, 0.0));
    let (z, b) = check_cancellation_random(200, 1, 1e-9).unwrap();
    assert!(z.pass && b.pass, "{z:?} {b:?}");
}

#[test]
fn coverage_identity_example_is_tight() {
    for d in [2, 3, 4] {
        let w = orthonormal_world(d);
        let m = DMatrix::identity(d * d, d * d);
        let phi = DVector::from_fn(d, |i, _| 0.3 + 0.1 * i as f64);
        let (lhs, rhs, c_min) = coverage_terms(&m, &phi, &w).unwrap();
        assert!((c_min - 1.0 / d as f64).abs() < 1e-12);
        assert!((lhs - d as f64 * phi.norm_squared()).abs() < 1e-12);
        assert!((rhs - lhs).abs() < 1e-9);
        assert!(check_coverage_kron(&m, &phi, &w, 1e-9).unwrap().pass);
    }
}

#[test]
fn coverage_edge_cases() {
    let w = orthonormal_world(3);
    let m = DMatrix::identity(9, 9);
    let (lhs, rhs, _) = coverage_terms(&m, &DVector::zeros(3), &w).unwrap();
    assert_eq!((lhs, rhs), (0.0, 0.0));
    let mut bad = DMatrix::identity(9, 9);
    bad[(0, 0)] = -1.0;
    assert!(coverage_terms(&bad, &DVector::zeros(3), &w).is_err());
    assert!(coverage_terms(&DMatrix::identity(4, 4), &DVector::zeros(3), &w).is_err());
    assert!(check_coverage_random(100, 2, 1e-9).unwrap().pass);
}

#[test]
fn kronecker_ordering() {
    assert!(check_kron_random(100, 5, 1e-9).unwrap().pass);
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    let c = DMatrix::identity(3, 3);
    let b = &c * 2.0;
    assert!(check_kron_order(&a, &b, &c, 1e-12).unwrap().pass);
    // B - C not PSD is rejected as input
    assert!(check_kron_order(&a, &c, &b, 1e-12).is_err());
}

#[test]
fn density_ratio_bounds() {
    assert_eq!(density_ratio_bound(RegKind::ReverseKl, 3.0).unwrap(), 3f64.exp());
    assert_eq!(density_ratio_bound(RegKind::ChiSquared, 2.0).unwrap(), 2.0);
    assert_eq!(density_ratio_bound(RegKind::MixedKlChi, 2.0).unwrap(), 3.0);
    assert!(density_ratio_bound(RegKind::Tsallis(0.5), 2.0).is_err());
    assert!(density_ratio_bound(RegKind::NegEntropy, 2.0).is_err());
    assert!(check_density_ratio_random(1, 0, RegKind::NegEntropy, 1.0, 0.0).is_err());
}

#[test]
fn zero_model_equilibrium_has_unit_ratio() {
    let w = common::fixture_world(7).with_theta(SkewMatrix::zeros(4)).unwrap();
    for kind in [RegKind::ReverseKl, RegKind::ChiSquared, RegKind::MixedKlChi] {
        let reg = RegularizerSpec::new(kind, w.explore_policy().clone(), 2.0, w.context_dist()).unwrap();
        let h = GameHandle::new(&w, &SkewMatrix::zeros(4), &reg).unwrap();
        let sol = solve_sne(&h, 1e-10, 1000).unwrap();
        assert!((max_density_ratio(&sol.policy, w.explore_policy()).unwrap() - 1.0).abs() < 1e-6);
        assert!(check_density_ratio(&sol.policy, &reg, 1e-6).unwrap().pass);
    }
}

#[test]
fn density_ratio_on_random_games() {
    assert!(check_density_ratio_random(30, 1, RegKind::ReverseKl, 3.0, 1e-6).unwrap().pass);
    assert!(check_density_ratio_random(30, 2, RegKind::ChiSquared, 2.0, 1e-6).unwrap().pass);
    assert!(check_density_ratio_random(30, 3, RegKind::MixedKlChi, 1.0, 1e-6).unwrap().pass);
}

#[test]
fn chi_squared_ratio_exceeds_eta_at_one() {
    // equilibrium ratio is 1 + eta (P_a - tau), which tops 1 in any nontrivial game
    let r = check_density_ratio_random(30, 4, RegKind::ChiSquared, 1.0, 1e-6).unwrap();
    assert!(r.violations > 0);
}

#[test]
fn confidence_radius_arithmetic() {
    let v = confidence_radius(1000.0, 0.1, 1.0, 4.0, 0.2).unwrap();
    let want = 1.0 + 10f64.ln() + 16.0 * 250f64.ln();
    assert!((v - want).abs() < 1e-12);
    let half = confidence_radius(1000.0, 0.05, 1.0, 4.0, 0.2).unwrap();
    assert!((half - v - 2f64.ln()).abs() < 1e-12);
    assert!(confidence_radius(2000.0, 0.1, 1.0, 4.0, 0.2).unwrap() > v);
    assert!(confidence_radius(1000.0, 0.1, 1.5, 4.0, 0.2).unwrap() > v);
    assert!(confidence_radius(1000.0, 0.1, 1.0, 5.0, 0.2).unwrap() > v);
    assert!(confidence_radius(1000.0, 1.0, 1.0, 4.0, 0.2).is_err());
}

#[test]
fn elliptical_potential_examples() {
    let x = e(3, 0);
    let rep: Vec<DVector<f64>> = (0..50).map(|_| x.clone()).collect();
    let p = elliptical_potential_sum(&rep, 1.0).unwrap();
    let harmonic: f64 = (1..=50).map(|t| 1.0 / t as f64).sum();
    assert!((p.sum - harmonic).abs() < 1e-12);
    assert!(p.pass);
    let basis: Vec<DVector<f64>> = (0..4).map(|i| e(4, i)).collect();
    let q = elliptical_potential_sum(&basis, 2.0).unwrap();
    assert!((q.sum - 2.0).abs() < 1e-12);
    assert!((q.bound - 8.0 * 1.5f64.ln()).abs() < 1e-12);
    assert!(q.pass);
    let z = elliptical_potential_sum(&[], 1.0).unwrap();
    assert_eq!(z.sum, 0.0);
    assert!(elliptical_potential_sum(&rep, 0.0).is_err());
}

#[test]
fn eluder_witness_for_d4() {
    let r = eluder_witness_check(4, 1.0, 0.01).unwrap();
    assert!(r.report.pass, "{:?}", r.report);
    assert_eq!(r.k, 3);
    assert_eq!(r.length, 24);
    assert_eq!(r.expected_length, 24);
    assert!(r.max_linear_prefix_ratio < 1.0 / 3.0);
    assert!(eluder_witness_check(4, 1.0, 1.0).is_err());
}

proptest! {
    #[test]
    fn eluder_bound_is_monotone(t in 1.0f64..1e6, lambda in 0.01f64..10.0, d in 1.0f64..20.0) {
        let b = eluder_upper_bound(d, lambda, t, 0.2, 0.25, 1.0).unwrap();
        prop_assert!(eluder_upper_bound(d, lambda, 2.0 * t, 0.2, 0.25, 1.0).unwrap() > b);
        prop_assert!(eluder_upper_bound(d, 2.0 * lambda, t, 0.2, 0.25, 1.0).unwrap() < b);
    }

    #[test]
    fn confidence_radius_is_monotone_in_t(t in 1.0f64..1e6) {
        let a = confidence_radius(t, 0.1, 1.0, 4.0, 0.2).unwrap();
        prop_assert!(confidence_radius(t * 1.5, 0.1, 1.0, 4.0, 0.2).unwrap() >= a);
    }
}
