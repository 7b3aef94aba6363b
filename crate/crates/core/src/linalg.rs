//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest condition number accepted by [`solve_guarded`].
pub const CONDITION_LIMIT: f64 = 1e12;

/// Induced ∞-norm: maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `‖x‖_D = sqrt(Σ d_i x_i²)` for a diagonal weighting `d`.
pub fn weighted_norm(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    x.iter()
        .zip(d.iter())
        .map(|(xi, di)| di * xi * xi)
        .sum::<f64>()
        .sqrt()
}

/// 2-norm condition number from the singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Condition number measured against a reference scale: `max(σ_max, scale) / σ_min`.
/// Catches matrices that are tiny relative to the quantities they were
/// formed from, which a plain ratio misses (e.g. any nonzero 1×1 matrix).
pub fn relative_condition(m: &DMatrix<f64>, scale: f64) -> f64 {
    let sv = m.singular_values();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        sv.max().max(scale) / min
    }
}

/// [`solve_guarded`] with the condition number taken relative to `scale`.
pub fn solve_guarded_scaled(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    scale: f64,
) -> Result<DVector<f64>> {
    let condition = relative_condition(a, scale);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Singular { condition });
    }
    a.clone().lu().solve(b).ok_or(Error::Singular { condition })
}

/// Dense LU solve that refuses systems with condition number above
/// [`CONDITION_LIMIT`] instead of regularising them.
pub fn solve_guarded(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let condition = condition_number(a);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Singular { condition });
    }
    a.clone().lu().solve(b).ok_or(Error::Singular { condition })
}

pub fn inverse_guarded(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(a);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Singular { condition });
    }
    a.clone().try_inverse().ok_or(Error::Singular { condition })
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn sym_eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// Eigenvalues of a general real square matrix as `(re, im)` pairs.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    m.complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn rows_to_vec(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
