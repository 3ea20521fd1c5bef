//! Dense complex helpers shared by the interior-point engine and callers.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::C64;

/// `Re Tr(A P)` for Hermitian `A` and arbitrary `P` of the same size.
///
/// With `A = Aᴴ`, `Tr(A P) = Σ conj(A_ij) P_ij`, so the real part is an
/// elementwise dot product and no transpose is needed.
pub fn re_inner(a: &DMatrix<C64>, p: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(p.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// Hermitian part `(M + Mᴴ) / 2`.
pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn trace_re(m: &DMatrix<C64>) -> f64 {
    m.diagonal().iter().map(|v| v.re).sum()
}

pub fn frobenius(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    hermitian_eigenvalues(m)[0]
}

/// Largest `α` with `X + α dX ⪰ 0` for `X ≻ 0`, or `∞` if unbounded.
pub(crate) fn psd_step_to_boundary(x: &DMatrix<C64>, dx: &DMatrix<C64>) -> Option<f64> {
    if x.nrows() == 0 {
        return Some(f64::INFINITY);
    }
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    // L⁻¹ dX L⁻ᴴ
    let left = l.solve_lower_triangular(dx)?;
    let inner = l.solve_lower_triangular(&left.adjoint())?;
    let lambda = min_eigenvalue(&hermitian_part(&inner));
    Some(if lambda >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lambda
    })
}

pub(crate) fn nonneg_step_to_boundary(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}
