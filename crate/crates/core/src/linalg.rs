//! Small dense linear-algebra helpers shared across the crate.
//!
//! Everything here operates on symmetric matrices via eigendecomposition,
//! which keeps results deterministic and makes definiteness checks explicit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero when inverting or taking roots.
pub const EIG_FLOOR: f64 = 1e-12;

/// Forces exact symmetry by averaging with the transpose.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute deviation from symmetry, for validation messages.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

/// Spectral condition number |eig|_max / |eig|_min of a symmetric matrix.
/// Returns infinity when the smallest magnitude eigenvalue is zero.
pub fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let vals = sym_eigenvalues(m);
    let max = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = vals.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Symmetric positive semidefinite square root. Eigenvalues below
/// `EIG_FLOOR` are clipped up to it so the result is always usable as a
/// penalty weight.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(EIG_FLOOR).sqrt());
    let scaled = {
        let mut q = eig.eigenvectors.clone();
        for (j, r) in roots.iter().enumerate() {
            q.column_mut(j).scale_mut(*r);
        }
        q
    };
    symmetrize(&(scaled * eig.eigenvectors.transpose()))
}

/// Solves `m x = b` for a general square matrix via LU.
pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularMoment(format!("{what} is singular")))
}

/// Inverse of a general square matrix via LU.
pub fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularMoment(format!("{what} is singular")))
}

/// Extracts the principal submatrix on the coordinates where `mask` is true.
pub fn masked_block(m: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    let idx: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &on)| on.then_some(i))
        .collect();
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Embeds a block back onto the masked coordinates of a zero p x p matrix.
pub fn embed_block(block: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    let idx: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &on)| on.then_some(i))
        .collect();
    assert_eq!(block.nrows(), idx.len());
    let mut out = DMatrix::zeros(mask.len(), mask.len());
    for (r, &ir) in idx.iter().enumerate() {
        for (c, &ic) in idx.iter().enumerate() {
            out[(ir, ic)] = block[(r, c)];
        }
    }
    out
}

pub fn masked_entries(v: &DVector<f64>, mask: &[bool]) -> DVector<f64> {
    let vals: Vec<f64> = v
        .iter()
        .zip(mask)
        .filter_map(|(x, &on)| on.then_some(*x))
        .collect();
    DVector::from_vec(vals)
}

/// Numerically stable log(sum(exp(terms))) with max subtraction.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|&v| (v - m).exp()).sum();
    m + sum.ln()
}
