mod common;

use common::{md_best_response, psi_oracle};
use gbpm::policy::Policy;
use gbpm::regularizers::{best_response_row, psi_grad, psi_value, strong_convexity_constant, RegKind, RegularizerSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [RegKind; 6] = [
    RegKind::ReverseKl,
    RegKind::ChiSquared,
    RegKind::MixedKlChi,
    RegKind::NegEntropy,
    RegKind::Tsallis(0.5),
    RegKind::Tsallis(2.0),
];

fn simplex(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + floor).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn objective(kind: RegKind, rf: &[f64], cost: &[f64], eta: f64, p: &[f64]) -> f64 {
    cost.iter().zip(p).map(|(c, q)| c * q).sum::<f64>() + psi_oracle(kind, rf, p) / eta
}

#[test]
fn kl_of_point_mass_against_uniform() {
    let reg = RegularizerSpec::new(RegKind::ReverseKl, Policy::uniform(&[2]), 1.0, &[1.0]).unwrap();
    let v = psi_value(&reg, &Policy::new(vec![vec![1.0, 0.0]]).unwrap()).unwrap();
    assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn chi_squared_example() {
    let reg = RegularizerSpec::new(RegKind::ChiSquared, Policy::uniform(&[2]), 1.0, &[1.0]).unwrap();
    let v = psi_value(&reg, &Policy::new(vec![vec![0.75, 0.25]]).unwrap()).unwrap();
    assert!((v - 0.125).abs() < 1e-15);
}

#[test]
fn gibbs_response_for_kl() {
    let p = best_response_row(RegKind::ReverseKl, &[0.5, 0.5], &[0.0, 0.25], 2.0);
    assert!((p[0] - 0.622_459_331_201_854_6).abs() < 1e-12, "{p:?}");
}

#[test]
fn kl_outside_support_is_an_error() {
    let reg = RegularizerSpec::new(RegKind::ReverseKl, Policy::uniform(&[2]), 1.0, &[1.0]).unwrap();
    let bad = Policy::new(vec![vec![0.5, 0.5, 0.0]]);
    assert!(bad.is_err() || psi_value(&reg, &bad.unwrap()).is_err());
    let rf = Policy::new(vec![vec![1.0, 0.0]]).unwrap();
    assert!(RegularizerSpec::new(RegKind::ReverseKl, rf.clone(), 1.0, &[1.0]).is_err());
    assert!(RegularizerSpec::new(RegKind::NegEntropy, rf, 1.0, &[1.0]).is_ok());
    assert!(RegularizerSpec::new(RegKind::Tsallis(1.0), Policy::uniform(&[2]), 1.0, &[1.0]).is_err());
    assert!(RegularizerSpec::new(RegKind::ReverseKl, Policy::uniform(&[2]), 0.0, &[1.0]).is_err());
}

#[test]
fn single_context_moduli() {
    let one = [1.0];
    assert_eq!(strong_convexity_constant(RegKind::ReverseKl, &[4], &one), 0.5);
    assert_eq!(strong_convexity_constant(RegKind::ChiSquared, &[4], &one), 1.0);
    assert_eq!(strong_convexity_constant(RegKind::MixedKlChi, &[4], &one), 1.5);
    assert!((strong_convexity_constant(RegKind::Tsallis(2.0), &[4], &one) - 0.5).abs() < 1e-15);
    assert!((strong_convexity_constant(RegKind::Tsallis(0.5), &[4], &one) - 0.5).abs() < 1e-15);
    let two = strong_convexity_constant(RegKind::ReverseKl, &[3, 3], &[0.5, 0.5]);
    assert!((two - 0.125).abs() < 1e-15);
}

#[test]
fn values_and_gradients_match_direct_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in KINDS {
        for _ in 0..20 {
            let d0 = simplex(&mut rng, 2, 0.1);
            let rf = vec![simplex(&mut rng, 3, 0.2), simplex(&mut rng, 4, 0.2)];
            let p = vec![simplex(&mut rng, 3, 0.05), simplex(&mut rng, 4, 0.05)];
            let reg = RegularizerSpec::new(kind, Policy::new(rf.clone()).unwrap(), 1.0, &d0).unwrap();
            let pi = Policy::new(p.clone()).unwrap();
            let want: f64 = (0..2)
                .map(|x| {
                    let r = if kind.uses_reference() { rf[x].clone() } else { vec![1.0; p[x].len()] };
                    d0[x] * psi_oracle(kind, &r, &p[x])
                })
                .sum();
            assert!((psi_value(&reg, &pi).unwrap() - want).abs() < 1e-12, "{kind:?}");
            let g = psi_grad(&reg, &pi).unwrap();
            let h = 1e-6;
            for x in 0..2 {
                for a in 0..p[x].len() {
                    let mut up = p[x].clone();
                    let mut dn = p[x].clone();
                    up[a] += h;
                    dn[a] -= h;
                    let r = if kind.uses_reference() { rf[x].clone() } else { vec![1.0; p[x].len()] };
                    let fd = d0[x] * (psi_oracle(kind, &r, &up) - psi_oracle(kind, &r, &dn)) / (2.0 * h);
                    assert!((fd - g[x][a]).abs() < 1e-6, "{kind:?} {fd} {}", g[x][a]);
                }
            }
        }
    }
}

#[test]
fn best_response_matches_first_order_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for kind in KINDS {
        for eta in [0.5, 2.0, 8.0] {
            for _ in 0..5 {
                let k = 4;
                let rf = if kind.uses_reference() { simplex(&mut rng, k, 0.3) } else { vec![1.0; k] };
                let cost: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
                let br = best_response_row(kind, &rf, &cost, eta);
                let md = md_best_response(kind, &rf, &cost, eta, 40_000);
                let ob = objective(kind, &rf, &cost, eta, &br);
                let om = objective(kind, &rf, &cost, eta, &md);
                assert!(ob <= om + 1e-9, "{kind:?} eta={eta} {ob} vs {om}");
                assert!((ob - om).abs() < 1e-5, "{kind:?} eta={eta} {ob} vs {om}");
                assert!((br.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(br.iter().all(|v| *v >= 0.0));
            }
        }
    }
}

#[test]
fn chi_squared_modulus_is_tight() {
    let rf = [0.25, 0.25, 0.25, 0.25];
    let p = [0.25, 0.25, 0.25, 0.25];
    let u = [0.375, 0.375, 0.125, 0.125];
    let d = psi_oracle(RegKind::ChiSquared, &rf, &u) - psi_oracle(RegKind::ChiSquared, &rf, &p);
    let l1: f64 = u.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
    let m = strong_convexity_constant(RegKind::ChiSquared, &[4], &[1.0]);
    assert!((d - 0.5 * m * l1 * l1).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bregman_divergence_dominates_certified_modulus(seed in 0u64..u64::MAX, which in 0usize..6) {
        let kind = KINDS[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d0 = simplex(&mut rng, 3, 0.05);
        let counts = [2usize, 3, 5];
        let rf: Vec<Vec<f64>> = counts.iter().map(|&k| simplex(&mut rng, k, 0.1)).collect();
        let reg = RegularizerSpec::new(kind, Policy::new(rf).unwrap(), 1.0, &d0).unwrap();
        let p = Policy::new(counts.iter().map(|&k| simplex(&mut rng, k, 0.02)).collect()).unwrap();
        let u = Policy::new(counts.iter().map(|&k| simplex(&mut rng, k, 0.02)).collect()).unwrap();
        let g = psi_grad(&reg, &p).unwrap();
        let lin: f64 = (0..3).map(|x| g[x].iter().zip(u.row(x)).zip(p.row(x)).map(|((a, b), c)| a * (b - c)).sum::<f64>()).sum();
        let breg = psi_value(&reg, &u).unwrap() - psi_value(&reg, &p).unwrap() - lin;
        let l1 = u.l1_distance(&p).unwrap();
        prop_assert!(breg >= 0.5 * reg.beta_inv() * l1 * l1 - 1e-12, "{kind:?} {breg} {l1}");
    }

    #[test]
    fn best_response_is_optimal_against_perturbations(seed in 0u64..u64::MAX, which in 0usize..6, eta in 0.2f64..10.0) {
        let kind = KINDS[which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 5;
        let rf = if kind.uses_reference() { simplex(&mut rng, k, 0.1) } else { vec![1.0; k] };
        let cost: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let br = best_response_row(kind, &rf, &cost, eta);
        let ob = objective(kind, &rf, &cost, eta, &br);
        for _ in 0..20 {
            let q = simplex(&mut rng, k, 0.0);
            let t: f64 = rng.gen::<f64>() * 0.1;
            let mix: Vec<f64> = br.iter().zip(&q).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            prop_assert!(ob <= objective(kind, &rf, &cost, eta, &mix) + 1e-12);
        }
    }
}
