//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Relative Schur off-diagonal mass below which a matrix is treated as normal.
pub const NORMALITY_TOL: f64 = 1e-9;

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_hermitian(m: &CMatrix, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = frobenius(m).max(f64::MIN_POSITIVE);
    frobenius(&(m - m.adjoint())) <= rel_tol * scale
}

/// Singular values in decreasing order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    if is_hermitian(m, 1e-13) {
        let mut s: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
            .eigenvalues
            .iter()
            .map(|x| x.abs())
            .collect();
        s.sort_by(|a, b| b.total_cmp(a));
        return s;
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues sorted by (re, im).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    let mut ev: Vec<Complex64> = if is_hermitian(m, 1e-13) {
        SymmetricEigen::new(hermitian_part(m))
            .eigenvalues
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect()
    } else {
        m.clone()
            .schur()
            .eigenvalues()
            .ok_or(Error::Eigensolver)?
            .iter()
            .copied()
            .collect()
    };
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Unitary diagonalization of a normal matrix: (Q, eigenvalues) with m = Q diag Q*.
pub fn normal_decomposition(m: &CMatrix) -> Result<(CMatrix, Vec<Complex64>)> {
    if is_hermitian(m, 1e-13) {
        let eig = SymmetricEigen::new(hermitian_part(m));
        let q = eig.eigenvectors.clone();
        let ev = eig.eigenvalues.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        return Ok((q, ev));
    }
    let (q, t) = m.clone().schur().unpack();
    let d = t.nrows();
    let mut off = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            off += t[(i, j)].norm_sqr();
        }
    }
    let off = off.sqrt();
    if off > NORMALITY_TOL * frobenius(m).max(1.0) {
        return Err(Error::NotNormal(off));
    }
    let ev = (0..d).map(|i| t[(i, i)]).collect();
    Ok((q, ev))
}

/// f(m) for normal m via unitary diagonalization.
pub fn normal_function<F>(m: &CMatrix, f: F) -> Result<CMatrix>
where
    F: Fn(Complex64) -> Complex64,
{
    let (q, ev) = normal_decomposition(m)?;
    Ok(apply_diagonal(&q, &ev, f))
}

pub fn apply_diagonal<F>(q: &CMatrix, ev: &[Complex64], f: F) -> CMatrix
where
    F: Fn(Complex64) -> Complex64,
{
    let mut scaled = q.clone();
    for (j, &mu) in ev.iter().enumerate() {
        let fj = f(mu);
        scaled.column_mut(j).iter_mut().for_each(|x| *x *= fj);
    }
    scaled * q.adjoint()
}

pub fn inverse(m: &CMatrix) -> Option<CMatrix> {
    m.clone().lu().try_inverse()
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// Principal power with the convention 0^z = 0.
pub fn principal_pow(mu: Complex64, z: Complex64) -> Complex64 {
    if mu == Complex64::new(0.0, 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    (z * mu.ln()).exp()
}
