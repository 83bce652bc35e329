//! Skew-symmetric matrix algebra.
//!
//! Vectorization is column-major throughout: `vec(M)[i + j*d] = M[(i, j)]`,
//! which is also nalgebra's storage order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GbpmError, Result};

/// Singular values below `RANK_REL_TOL * sigma_max` count as zero.
pub const RANK_REL_TOL: f64 = 1e-8;

/// A d×d matrix with `M^T = -M`.
///
/// Every constructor goes through [`skew_project`] or an exactly
/// antisymmetric formula, so the invariant holds bitwise.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewMatrix {
    m: DMatrix<f64>,
}

impl SkewMatrix {
    pub fn zeros(dim: usize) -> Self {
        SkewMatrix {
            m: DMatrix::zeros(dim, dim),
        }
    }

    /// `c (e_i e_j^T - e_j e_i^T)`.
    pub fn elementary(dim: usize, i: usize, j: usize, c: f64) -> Result<Self> {
        if i >= dim || j >= dim {
            return Err(GbpmError::Index(format!("({i}, {j}) in dimension {dim}")));
        }
        let mut m = DMatrix::zeros(dim, dim);
        if i != j {
            m[(i, j)] = c;
            m[(j, i)] = -c;
        }
        Ok(SkewMatrix { m })
    }

    /// Accepts a matrix that is skew up to `1e-10` and returns its exact projection.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(GbpmError::Dimension(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let dev = (&m + m.transpose()).amax();
        if dev > 1e-10 {
            return Err(GbpmError::InvalidSpec(format!(
                "matrix is not skew-symmetric (max |M + M^T| = {dev:.3e})"
            )));
        }
        skew_project(&m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(GbpmError::Dimension("ragged rows".into()));
        }
        Self::from_matrix(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.m[(i, j)]).collect())
            .collect()
    }

    /// `phi1^T Theta phi2`.
    pub fn bilinear(&self, phi1: &DVector<f64>, phi2: &DVector<f64>) -> f64 {
        phi1.dot(&(&self.m * phi2))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn operator_norm(&self) -> f64 {
        singular_values(&self.m).iter().cloned().fold(0.0, f64::max)
    }

    pub fn nuclear_norm(&self) -> f64 {
        nuclear_norm(&self.m)
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.m, RANK_REL_TOL)
    }

    pub fn scaled(&self, c: f64) -> Self {
        SkewMatrix { m: &self.m * c }
    }

    pub fn add(&self, other: &SkewMatrix) -> Result<Self> {
        check_same_dim(self, other)?;
        Ok(SkewMatrix {
            m: &self.m + &other.m,
        })
    }

    pub fn sub(&self, other: &SkewMatrix) -> Result<Self> {
        check_same_dim(self, other)?;
        Ok(SkewMatrix {
            m: &self.m - &other.m,
        })
    }

    /// Maximum of `|M + M^T|`; zero for every value of this type.
    pub fn skew_deviation(&self) -> f64 {
        (&self.m + self.m.transpose()).amax()
    }
}

fn check_same_dim(a: &SkewMatrix, b: &SkewMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(GbpmError::Dimension(format!("{} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Parameter class `Skew(d; 2r, S)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    /// `2r`, the rank budget.
    pub rank_bound: usize,
    /// `S`, the nuclear-norm budget.
    pub nuc_bound: f64,
}

impl ModelSpec {
    pub fn new(dim: usize, rank_bound: usize, nuc_bound: f64) -> Result<Self> {
        let s = ModelSpec {
            dim,
            rank_bound,
            nuc_bound,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(GbpmError::InvalidSpec(format!("dim must be >= 2, got {}", self.dim)));
        }
        if self.rank_bound == 0 || self.rank_bound % 2 != 0 {
            return Err(GbpmError::InvalidSpec(format!(
                "rank bound must be a positive even integer, got {}",
                self.rank_bound
            )));
        }
        if self.rank_bound > self.dim {
            return Err(GbpmError::InvalidSpec(format!(
                "rank bound {} exceeds dim {}",
                self.rank_bound, self.dim
            )));
        }
        if !(self.nuc_bound > 0.0 && self.nuc_bound.is_finite()) {
            return Err(GbpmError::InvalidSpec(format!(
                "nuclear budget must be positive, got {}",
                self.nuc_bound
            )));
        }
        Ok(())
    }

    /// `r`, half the rank budget.
    pub fn half_rank(&self) -> usize {
        self.rank_bound / 2
    }
}

/// Frobenius-nearest skew matrix, `(M - M^T)/2`.
pub fn skew_project(m: &DMatrix<f64>) -> Result<SkewMatrix> {
    if !m.is_square() {
        return Err(GbpmError::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d = m.nrows();
    // (a - b) and (b - a) are exact negatives in IEEE arithmetic, so the
    // result is skew bitwise.
    let out = DMatrix::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] - m[(j, i)]));
    Ok(SkewMatrix { m: out })
}

/// Draws `sum_k sigma_k (u_k v_k^T - v_k u_k^T)` with orthonormal `{u_k, v_k}`,
/// rescaled so the nuclear norm is exactly `spec.nuc_bound`.
pub fn random_low_rank_skew<R: Rng + ?Sized>(rng: &mut R, spec: &ModelSpec) -> Result<SkewMatrix> {
    spec.validate()?;
    let d = spec.dim;
    let k = spec.rank_bound;
    let g = DMatrix::<f64>::from_fn(d, k, |_, _| rng.sample(StandardNormal));
    let q = g.qr().q();
    let r = spec.half_rank();
    let sigmas: Vec<f64> = (0..r).map(|_| rng.gen_range(0.5..1.5)).collect();
    // nuclear norm of sigma (u v^T - v u^T) is 2 sigma
    let total: f64 = 2.0 * sigmas.iter().sum::<f64>();
    let scale = spec.nuc_bound / total;
    let mut m = DMatrix::zeros(d, d);
    for (idx, s) in sigmas.iter().enumerate() {
        let u = q.column(2 * idx);
        let v = q.column(2 * idx + 1);
        m += (u * v.transpose() - v * u.transpose()) * (s * scale);
    }
    skew_project(&m)
}

/// Singular-value soft-thresholding, the prox of `tau * ||.||_nuc`.
pub fn svt(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0) {
        return Err(GbpmError::Domain(format!("threshold must be >= 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(m.clone());
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (k, s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk > 0.0 {
            out += u.column(k) * vt.row(k) * shrunk;
        }
    }
    Ok(out)
}

/// SVT restricted to skew input; re-projects to remove rounding asymmetry.
pub fn svt_skew(m: &SkewMatrix, tau: f64) -> Result<SkewMatrix> {
    skew_project(&svt(m.matrix(), tau)?)
}

pub fn vectorize(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn matrixize(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(GbpmError::Dimension(format!("length {n} is not a perfect square")));
    }
    Ok(DMatrix::from_column_slice(d, d, v.as_slice()))
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().sum()
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Count of singular values strictly above an absolute threshold.
pub fn rank_above(m: &DMatrix<f64>, threshold: f64) -> usize {
    singular_values(m).iter().filter(|&&v| v > threshold).count()
}
