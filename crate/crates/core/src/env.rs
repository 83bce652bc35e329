//! The preference model: links, feature worlds and duel feedback.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GbpmError, Result};
use crate::policy::{check_distribution, Policy};
use crate::skewlin::{random_low_rank_skew, ModelSpec, SkewMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    Logistic,
    Linear,
}

/// A symmetric, increasing link `mu` with its derivative bounds on `|z| <= S`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub kind: LinkKind,
    /// Exact minimum of `mu'` over `|z| <= S`.
    pub kappa: f64,
    /// Upper bound on `mu'` and `|mu''|`.
    pub l_mu: f64,
    /// Self-concordance constant, informational only.
    pub self_concordance: f64,
    /// The `S` that `kappa` was computed for.
    pub range: f64,
}

impl LinkSpec {
    pub fn new(kind: LinkKind, range: f64) -> Result<Self> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(GbpmError::InvalidSpec(format!("link range must be positive, got {range}")));
        }
        Ok(match kind {
            LinkKind::Logistic => LinkSpec {
                kind,
                kappa: logistic_dot(range),
                l_mu: 0.25,
                self_concordance: 1.0,
                range,
            },
            LinkKind::Linear => LinkSpec {
                kind,
                kappa: 1.0,
                l_mu: 1.0,
                self_concordance: 0.0,
                range,
            },
        })
    }

    pub fn logistic(range: f64) -> Self {
        Self::new(LinkKind::Logistic, range).expect("positive range")
    }

    pub fn linear(range: f64) -> Self {
        Self::new(LinkKind::Linear, range).expect("positive range")
    }

    /// `mu(z)`. The linear link is not clamped here; see [`sample_duel`].
    #[inline]
    pub fn mu(&self, z: f64) -> f64 {
        match self.kind {
            LinkKind::Logistic => logistic(z),
            LinkKind::Linear => 0.5 + z,
        }
    }

    #[inline]
    pub fn mu_dot(&self, z: f64) -> f64 {
        match self.kind {
            LinkKind::Logistic => logistic_dot(z),
            LinkKind::Linear => 1.0,
        }
    }

    #[inline]
    pub fn mu_ddot(&self, z: f64) -> f64 {
        match self.kind {
            LinkKind::Logistic => logistic_dot(z) * (1.0 - 2.0 * logistic(z)),
            LinkKind::Linear => 0.0,
        }
    }

    /// Log-partition `m` with `m' = mu`. For the linear link this is the
    /// quasi-likelihood `z^2/2 + z/2`.
    #[inline]
    pub fn log_partition(&self, z: f64) -> f64 {
        match self.kind {
            LinkKind::Logistic => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            LinkKind::Linear => 0.5 * z * z + 0.5 * z,
        }
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logistic_dot(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

pub fn link_eval(link: &LinkSpec, z: f64) -> f64 {
    link.mu(z)
}

pub fn link_deriv(link: &LinkSpec, z: f64) -> f64 {
    link.mu_dot(z)
}

/// `mu(phi1^T Theta phi2)`.
pub fn preference_prob(
    theta: &SkewMatrix,
    phi1: &DVector<f64>,
    phi2: &DVector<f64>,
    link: &LinkSpec,
) -> Result<f64> {
    let d = theta.dim();
    if phi1.len() != d || phi2.len() != d {
        return Err(GbpmError::Dimension(format!(
            "features of length {} and {} against dim {d}",
            phi1.len(),
            phi2.len()
        )));
    }
    Ok(link.mu(theta.bilinear(phi1, phi2)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// `e_1..e_d`, then `(e_i + e_j)/sqrt(2)` in lexicographic order.
    SimplexCorners,
    RandomUnitSphere,
    /// Random sign vectors scaled by `1/sqrt(d)`.
    HypercubeScaled,
}

/// A finite world: contexts, actions, features, `d0`, `rho`, link and `Theta*`.
#[derive(Debug)]
pub struct PreferenceWorld {
    features: Vec<Vec<DVector<f64>>>,
    context_dist: Vec<f64>,
    explore: Policy,
    link: LinkSpec,
    theta_star: SkewMatrix,
    clamp_events: AtomicU64,
}

impl Clone for PreferenceWorld {
    fn clone(&self) -> Self {
        PreferenceWorld {
            features: self.features.clone(),
            context_dist: self.context_dist.clone(),
            explore: self.explore.clone(),
            link: self.link,
            theta_star: self.theta_star.clone(),
            clamp_events: AtomicU64::new(self.clamp_events.load(Ordering::Relaxed)),
        }
    }
}

impl PreferenceWorld {
    pub fn new(
        features: Vec<Vec<DVector<f64>>>,
        context_dist: Vec<f64>,
        explore: Policy,
        link: LinkSpec,
        theta_star: SkewMatrix,
    ) -> Result<Self> {
        let d = theta_star.dim();
        if features.is_empty() {
            return Err(GbpmError::InvalidSpec("world needs at least one context".into()));
        }
        if context_dist.len() != features.len() {
            return Err(GbpmError::Dimension(format!(
                "{} contexts but context distribution of length {}",
                features.len(),
                context_dist.len()
            )));
        }
        check_distribution(&context_dist)
            .map_err(|m| GbpmError::InvalidSpec(format!("context distribution: {m}")))?;
        for (x, acts) in features.iter().enumerate() {
            if acts.is_empty() {
                return Err(GbpmError::InvalidSpec(format!("context {x} has no actions")));
            }
            for (a, phi) in acts.iter().enumerate() {
                if phi.len() != d {
                    return Err(GbpmError::Dimension(format!(
                        "feature ({x}, {a}) has length {} but dim is {d}",
                        phi.len()
                    )));
                }
                if phi.norm() > 1.0 + 1e-12 {
                    return Err(GbpmError::InvalidSpec(format!(
                        "feature ({x}, {a}) has norm {} > 1",
                        phi.norm()
                    )));
                }
            }
        }
        let counts: Vec<usize> = features.iter().map(|f| f.len()).collect();
        explore.check_shape(&counts)?;
        Ok(PreferenceWorld {
            features,
            context_dist,
            explore,
            link,
            theta_star,
            clamp_events: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.dim()
    }

    pub fn n_contexts(&self) -> usize {
        self.features.len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.len()).collect()
    }

    pub fn feature(&self, x: usize, a: usize) -> &DVector<f64> {
        &self.features[x][a]
    }

    pub fn features(&self) -> &[Vec<DVector<f64>>] {
        &self.features
    }

    pub fn context_dist(&self) -> &[f64] {
        &self.context_dist
    }

    pub fn explore_policy(&self) -> &Policy {
        &self.explore
    }

    pub fn link(&self) -> &LinkSpec {
        &self.link
    }

    pub fn theta_star(&self) -> &SkewMatrix {
        &self.theta_star
    }

    /// Same world with a different ground-truth parameter.
    pub fn with_theta(&self, theta: SkewMatrix) -> Result<Self> {
        if theta.dim() != self.dim() {
            return Err(GbpmError::Dimension(format!("{} vs {}", theta.dim(), self.dim())));
        }
        let mut w = self.clone();
        w.theta_star = theta;
        Ok(w)
    }

    pub fn with_explore_policy(&self, explore: Policy) -> Result<Self> {
        explore.check_shape(&self.action_counts())?;
        let mut w = self.clone();
        w.explore = explore;
        Ok(w)
    }

    /// Number of times the linear link left `[0, 1]` during sampling.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    pub fn check_action(&self, x: usize, a: usize) -> Result<()> {
        if x >= self.n_contexts() {
            return Err(GbpmError::Index(format!("context {x} of {}", self.n_contexts())));
        }
        if a >= self.features[x].len() {
            return Err(GbpmError::Index(format!(
                "action {a} in context {x} with {} actions",
                self.features[x].len()
            )));
        }
        Ok(())
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        crate::policy::sample_index(&self.context_dist, rng)
    }

    /// `E_{x~d0} E_{a~rho} [phi phi^T]`.
    pub fn design_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (x, acts) in self.features.iter().enumerate() {
            for (a, phi) in acts.iter().enumerate() {
                let w = self.context_dist[x] * self.explore.row(x)[a];
                if w > 0.0 {
                    m += phi * phi.transpose() * w;
                }
            }
        }
        m
    }
}

/// Bernoulli duel outcome: `true` when `a1` is preferred.
///
/// Under the linear link a probability outside `[0, 1]` is clamped and
/// counted in [`PreferenceWorld::clamp_events`].
pub fn sample_duel<R: Rng + ?Sized>(
    world: &PreferenceWorld,
    x: usize,
    a1: usize,
    a2: usize,
    rng: &mut R,
) -> Result<bool> {
    world.check_action(x, a1)?;
    world.check_action(x, a2)?;
    let mut p = world
        .link
        .mu(world.theta_star.bilinear(world.feature(x, a1), world.feature(x, a2)));
    if !(0.0..=1.0).contains(&p) {
        world.clamp_events.fetch_add(1, Ordering::Relaxed);
        p = p.clamp(0.0, 1.0);
    }
    let u: f64 = rng.gen();
    Ok(u < p)
}

/// Smallest eigenvalue of the exploration design matrix, floored at 0.
pub fn min_eig_design(world: &PreferenceWorld) -> f64 {
    let eig = world.design_matrix().symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0)
}

/// Instance-specific `kappa*`: smallest `mu'` over the world's feature pairs
/// under `Theta*`. Diagnostic only.
pub fn kappa_star(world: &PreferenceWorld) -> f64 {
    let mut k = f64::INFINITY;
    for acts in world.features() {
        for p in acts {
            for q in acts {
                k = k.min(world.link.mu_dot(world.theta_star.bilinear(p, q)));
            }
        }
    }
    k
}

/// Recipe for a generated world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub dim: usize,
    /// `2r`.
    pub rank_bound: usize,
    /// `S`.
    pub nuc_bound: f64,
    pub link: LinkKind,
    pub n_contexts: usize,
    pub n_actions: usize,
    pub feature_mode: FeatureMode,
    pub seed: u64,
}

impl WorldSpec {
    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(self.dim, self.rank_bound, self.nuc_bound)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec()?;
        if self.n_contexts == 0 || self.n_actions == 0 {
            return Err(GbpmError::InvalidSpec("need at least one context and one action".into()));
        }
        if self.link == LinkKind::Linear && self.nuc_bound > 0.5 {
            return Err(GbpmError::InvalidSpec(format!(
                "linear link requires nuc_bound <= 0.5 so that mu stays in [0, 1], got {}",
                self.nuc_bound
            )));
        }
        if self.feature_mode == FeatureMode::SimplexCorners {
            let max = self.dim + self.dim * (self.dim - 1) / 2;
            if self.n_actions > max {
                return Err(GbpmError::InvalidSpec(format!(
                    "simplex-corners supports at most {max} actions in dim {}",
                    self.dim
                )));
            }
        }
        Ok(())
    }
}

/// Builds the world described by `spec`: uniform `d0`, uniform `rho`,
/// `Theta*` from [`random_low_rank_skew`].
pub fn generate_world(spec: &WorldSpec) -> Result<PreferenceWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let theta = random_low_rank_skew(&mut rng, &spec.model_spec()?)?;
    let features: Vec<Vec<DVector<f64>>> = (0..spec.n_contexts)
        .map(|_| generate_features(spec.feature_mode, spec.dim, spec.n_actions, &mut rng))
        .collect();
    let counts = vec![spec.n_actions; spec.n_contexts];
    PreferenceWorld::new(
        features,
        vec![1.0 / spec.n_contexts as f64; spec.n_contexts],
        Policy::uniform(&counts),
        LinkSpec::new(spec.link, spec.nuc_bound)?,
        theta,
    )
}

pub fn generate_features<R: Rng + ?Sized>(
    mode: FeatureMode,
    dim: usize,
    n: usize,
    rng: &mut R,
) -> Vec<DVector<f64>> {
    match mode {
        FeatureMode::SimplexCorners => {
            let mut out: Vec<DVector<f64>> = (0..dim.min(n))
                .map(|i| DVector::from_fn(dim, |k, _| if k == i { 1.0 } else { 0.0 }))
                .collect();
            let h = std::f64::consts::FRAC_1_SQRT_2;
            'outer: for i in 0..dim {
                for j in (i + 1)..dim {
                    if out.len() >= n {
                        break 'outer;
                    }
                    out.push(DVector::from_fn(dim, |k, _| if k == i || k == j { h } else { 0.0 }));
                }
            }
            out
        }
        FeatureMode::RandomUnitSphere => (0..n)
            .map(|_| {
                let g = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
                let nrm = g.norm();
                g / nrm
            })
            .collect(),
        FeatureMode::HypercubeScaled => {
            let s = 1.0 / (dim as f64).sqrt();
            (0..n)
                .map(|_| DVector::from_fn(dim, |_, _| if rng.gen::<bool>() { s } else { -s }))
                .collect()
        }
    }
}
