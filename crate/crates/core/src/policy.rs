use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GbpmError, Result};

/// Row sums must match 1 within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Per-context distribution over that context's actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    rows: Vec<Vec<f64>>,
}

impl Policy {
    /// Validates nonnegativity and unit row sums.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (x, row) in rows.iter().enumerate() {
            check_distribution(row).map_err(|msg| {
                GbpmError::InvalidSpec(format!("policy row for context {x}: {msg}"))
            })?;
        }
        Ok(Policy { rows })
    }

    /// Renormalizes each row; rejects negative or all-zero rows.
    pub fn normalized(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        for (x, mut row) in rows.into_iter().enumerate() {
            if row.is_empty() || row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(GbpmError::InvalidSpec(format!(
                    "context {x}: row must be nonempty, finite and nonnegative"
                )));
            }
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(GbpmError::InvalidSpec(format!("context {x}: zero row")));
            }
            row.iter_mut().for_each(|p| *p /= s);
            out.push(row);
        }
        Ok(Policy { rows: out })
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        Policy { rows }
    }

    pub fn uniform(action_counts: &[usize]) -> Self {
        Policy {
            rows: action_counts
                .iter()
                .map(|&k| vec![1.0 / k as f64; k])
                .collect(),
        }
    }

    /// Deterministic policy: `choice[x]` in every context.
    pub fn point_mass(action_counts: &[usize], choice: &[usize]) -> Result<Self> {
        if choice.len() != action_counts.len() {
            return Err(GbpmError::Dimension("one choice per context required".into()));
        }
        let mut rows = Vec::with_capacity(action_counts.len());
        for (x, (&k, &a)) in action_counts.iter().zip(choice).enumerate() {
            if a >= k {
                return Err(GbpmError::Index(format!("action {a} in context {x} with {k} actions")));
            }
            let mut row = vec![0.0; k];
            row[a] = 1.0;
            rows.push(row);
        }
        Ok(Policy { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn n_contexts(&self) -> usize {
        self.rows.len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.len()).collect()
    }

    /// `sum_{x,a} |pi - pi'|`, unweighted across contexts.
    pub fn l1_distance(&self, other: &Policy) -> Result<f64> {
        self.check_shape(&other.action_counts())?;
        Ok(self
            .rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .sum())
    }

    pub fn check_shape(&self, action_counts: &[usize]) -> Result<()> {
        if self.action_counts() != action_counts {
            return Err(GbpmError::Dimension(format!(
                "policy shape {:?} does not match {:?}",
                self.action_counts(),
                action_counts
            )));
        }
        Ok(())
    }

    /// Weighted average of policies with the same shape.
    pub fn mixture(policies: &[&Policy], weights: &[f64]) -> Result<Policy> {
        let first = policies
            .first()
            .ok_or_else(|| GbpmError::InvalidSpec("empty mixture".into()))?;
        if weights.len() != policies.len() {
            return Err(GbpmError::Dimension("one weight per policy required".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(GbpmError::InvalidSpec("mixture weights must be nonnegative with positive sum".into()));
        }
        let shape = first.action_counts();
        let mut rows: Vec<Vec<f64>> = shape.iter().map(|&k| vec![0.0; k]).collect();
        for (p, &w) in policies.iter().zip(weights) {
            p.check_shape(&shape)?;
            for (acc, row) in rows.iter_mut().zip(&p.rows) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += w / total * v;
                }
            }
        }
        Ok(Policy { rows })
    }

    /// Draws an action for context `x`.
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        sample_index(&self.rows[x], rng)
    }
}

/// Inverse-CDF draw from a probability vector; falls back to the last
/// positive entry when rounding leaves the CDF below the draw.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub(crate) fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if row.is_empty() {
        return Err("empty".into());
    }
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err("entries must be finite and nonnegative".into());
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL * row.len().max(1) as f64 {
        return Err(format!("sums to {s}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        assert!(Policy::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(Policy::new(vec![vec![1.5, -0.5]]).is_err());
        assert!(Policy::new(vec![vec![]]).is_err());
    }

    #[test]
    fn l1_distance_sums_over_contexts() {
        let a = Policy::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let b = Policy::new(vec![vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(a.l1_distance(&b).unwrap(), 2.0);
    }

    #[test]
    fn mixture_of_identical_is_identity() {
        let a = Policy::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let m = Policy::mixture(&[&a, &a, &a], &[1.0, 2.0, 3.0]).unwrap();
        for (p, q) in m.row(0).iter().zip(a.row(0)) {
            assert!((p - q).abs() < 1e-15);
        }
    }
}
