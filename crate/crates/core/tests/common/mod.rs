//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use gbpm::env::{generate_world, FeatureMode, LinkKind, PreferenceWorld, WorldSpec};
use gbpm::regularizers::RegKind;
use nalgebra::DMatrix;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Singular values via Jacobi on `M^T M`, descending.
pub fn oracle_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let g = m.transpose() * m;
    let mut s: Vec<f64> = jacobi_eigenvalues(&g).into_iter().map(|v| v.max(0.0).sqrt()).collect();
    s.reverse();
    s
}

/// Unweighted `psi` on one context, written out independently.
pub fn psi_oracle(kind: RegKind, rf: &[f64], p: &[f64]) -> f64 {
    let k = p.len() as f64;
    let kl: f64 = p.iter().zip(rf).filter(|(a, _)| **a > 0.0).map(|(a, r)| a * (a / r).ln()).sum();
    let chi: f64 = p.iter().zip(rf).map(|(a, r)| 0.5 * r * (a / r - 1.0).powi(2)).sum();
    match kind {
        RegKind::ReverseKl => kl,
        RegKind::ChiSquared => chi,
        RegKind::MixedKlChi => kl + chi,
        RegKind::NegEntropy => p.iter().filter(|a| **a > 0.0).map(|a| a * a.ln()).sum::<f64>() + k.ln(),
        RegKind::Tsallis(q) => (p.iter().map(|a| a.powf(q)).sum::<f64>() - k.powf(1.0 - q)) / (q - 1.0),
    }
}

fn psi_grad_oracle(kind: RegKind, rf: &[f64], p: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(rf)
        .map(|(&a, &r)| match kind {
            RegKind::ReverseKl => (a / r).ln() + 1.0,
            RegKind::ChiSquared => a / r - 1.0,
            RegKind::MixedKlChi => (a / r).ln() + 1.0 + a / r - 1.0,
            RegKind::NegEntropy => a.ln() + 1.0,
            RegKind::Tsallis(q) => q * a.powf(q - 1.0) / (q - 1.0),
        })
        .collect()
}

fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// `argmin <cost, p> + psi(p)/eta` by first-order iterations: entropic
/// mirror descent for kinds with interior solutions, projected gradient for
/// the rest.
pub fn md_best_response(kind: RegKind, rf: &[f64], cost: &[f64], eta: f64, iters: usize) -> Vec<f64> {
    let k = cost.len();
    let interior = matches!(kind, RegKind::ReverseKl | RegKind::MixedKlChi | RegKind::NegEntropy)
        || matches!(kind, RegKind::Tsallis(q) if q < 1.0);
    let mut p = vec![1.0 / k as f64; k];
    let mut avg = vec![0.0; k];
    let mut wsum = 0.0;
    for t in 0..iters {
        let g: Vec<f64> = psi_grad_oracle(kind, rf, &p).iter().zip(cost).map(|(d, c)| c + d / eta).collect();
        let step = 0.5 * eta.min(1.0) / ((t + 1) as f64).sqrt().min(20.0) / 4.0;
        if interior {
            let m = g.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut s = 0.0;
            for a in 0..k {
                p[a] *= (-step * (g[a] - m)).exp();
                s += p[a];
            }
            p.iter_mut().for_each(|v| *v /= s);
        } else {
            let v: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            p = project_simplex(&v);
        }
        if t >= iters / 2 {
            for a in 0..k {
                avg[a] += p[a];
            }
            wsum += 1.0;
        }
    }
    avg.iter().map(|v| v / wsum).collect()
}

/// World used by the learner fixtures: d=4, 2r=2, S=1, logistic, one
/// context, six simplex-corner actions.
pub fn fixture_spec(seed: u64) -> WorldSpec {
    WorldSpec {
        dim: 4,
        rank_bound: 2,
        nuc_bound: 1.0,
        link: LinkKind::Logistic,
        n_contexts: 1,
        n_actions: 6,
        feature_mode: FeatureMode::SimplexCorners,
        seed,
    }
}

pub fn fixture_world(seed: u64) -> PreferenceWorld {
    generate_world(&fixture_spec(seed)).unwrap()
}
