//! The numeric inequality suite behind `gbpm verify`.

use gbpm::checks::{
    check_cancellation_random, check_coverage_random, check_density_ratio_random, check_dual_gap_bounds_random,
    check_kron_random, elliptical_potential_sum, eluder_witness_check, CheckReport,
};
use gbpm::env::{generate_world, FeatureMode, LinkKind, WorldSpec};
use gbpm::regularizers::RegKind;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::seeds::{derive_seed, mix64};

pub const VERIFY_MASTER_SEED: u64 = 0x6770_626d;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub reports: Vec<CheckReport>,
}

impl VerifyOutcome {
    pub fn failed(&self) -> usize {
        self.reports.iter().filter(|r| !r.pass).count()
    }

    pub fn into_result(self) -> Result<Self> {
        match self.failed() {
            0 => Ok(self),
            failed => Err(HarnessError::Verification { failed, total: self.reports.len() }),
        }
    }
}

fn named(mut r: CheckReport, suffix: &str) -> CheckReport {
    r.name = format!("{}[{suffix}]", r.name);
    r
}

/// Runs every check with seeds derived from a fixed master seed. `quick`
/// shrinks the instance counts by 10x.
pub fn run_checks(quick: bool) -> Result<VerifyOutcome> {
    let n = |full: usize| if quick { (full / 10).max(1) } else { full };
    let mut counter = 0u64;
    let mut seed = || {
        counter += 1;
        derive_seed(VERIFY_MASTER_SEED, counter - 1)
    };
    let mut reports = Vec::new();
    for (kind, eta) in [(RegKind::ReverseKl, 2.0), (RegKind::ChiSquared, 2.0)] {
        let (q, l) = check_dual_gap_bounds_random(n(100), seed(), kind, eta, 1e-8)?;
        reports.push(named(q, &format!("{}, eta={eta}", kind.name())));
        reports.push(named(l, &format!("{}, eta={eta}", kind.name())));
    }
    let (z, b) = check_cancellation_random(n(500), seed(), 1e-9)?;
    reports.extend([z, b]);
    reports.push(check_coverage_random(n(200), seed(), 1e-9)?);
    reports.push(check_kron_random(n(200), seed(), 1e-10)?);
    let ratios = [
        (RegKind::ReverseKl, 3.0),
        (RegKind::ChiSquared, 2.0),
        (RegKind::ChiSquared, 4.0),
        (RegKind::ChiSquared, 8.0),
        (RegKind::MixedKlChi, 1.0),
        (RegKind::MixedKlChi, 4.0),
    ];
    for (kind, eta) in ratios {
        let r = check_density_ratio_random(n(100), seed(), kind, eta, 1e-4)?;
        reports.push(named(r, &format!("{}, eta={eta}", kind.name())));
    }
    reports.push(eluder_witness_check(4, 1.0, 0.01)?.report);
    reports.push(elliptical_check(if quick { 500 } else { 5000 }, seed())?);
    Ok(VerifyOutcome { reports })
}

/// Elliptical potential over a pseudo-random sequence of `vec(phi phi'^T)`
/// built from a small simplex-corner world.
fn elliptical_check(t: usize, seed: u64) -> Result<CheckReport> {
    let world = generate_world(&WorldSpec {
        dim: 3,
        rank_bound: 2,
        nuc_bound: 1.0,
        link: LinkKind::Logistic,
        n_contexts: 1,
        n_actions: 3,
        feature_mode: FeatureMode::SimplexCorners,
        seed,
    })?;
    let k = world.action_counts()[0] as u64;
    let mut state = seed;
    let mut vectors = Vec::with_capacity(t);
    for _ in 0..t {
        state = mix64(state.wrapping_add(1));
        let a = (state % k) as usize;
        let b = ((state >> 32) % k) as usize;
        vectors.push(world.feature(0, a).kronecker(world.feature(0, b)));
    }
    let ep = elliptical_potential_sum(&vectors, 1.0)?;
    let mut r = CheckReport::new("elliptical-potential", 0.0);
    r.observe(ep.sum, ep.bound, 0.0);
    Ok(r)
}
