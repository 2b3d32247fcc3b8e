use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ThetaMatrix;
use crate::error::{Error, Result};
use crate::lattice::{self, Index, LatticeBox};

/// Relative threshold below which coefficients are dropped after arithmetic.
pub const DEFAULT_PRUNE: f64 = 1e-14;

/// Condition estimates above this make an inverse "not invertible".
pub const MAX_CONDITION: f64 = 1e12;

/// A finite Fourier series sum_k a_k U^k in A_theta.
#[derive(Clone, Debug)]
pub struct NcElement {
    theta: Arc<ThetaMatrix>,
    coeffs: BTreeMap<Index, Complex64>,
}

impl PartialEq for NcElement {
    fn eq(&self, other: &Self) -> bool {
        same_theta(&self.theta, &other.theta) && self.coeffs == other.coeffs
    }
}

pub(crate) fn same_theta(a: &Arc<ThetaMatrix>, b: &Arc<ThetaMatrix>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

fn c0() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

impl NcElement {
    pub fn zero(theta: &Arc<ThetaMatrix>) -> Self {
        NcElement {
            theta: theta.clone(),
            coeffs: BTreeMap::new(),
        }
    }

    pub fn one(theta: &Arc<ThetaMatrix>) -> Self {
        Self::scalar(theta, Complex64::new(1.0, 0.0))
    }

    pub fn scalar(theta: &Arc<ThetaMatrix>, c: Complex64) -> Self {
        Self::monomial(theta, lattice::zero_index(theta.dim()), c)
    }

    pub fn monomial(theta: &Arc<ThetaMatrix>, k: Index, c: Complex64) -> Self {
        assert_eq!(k.len(), theta.dim(), "lattice point has wrong dimension");
        let mut coeffs = BTreeMap::new();
        if c != c0() {
            coeffs.insert(k, c);
        }
        NcElement {
            theta: theta.clone(),
            coeffs,
        }
    }

    /// The generator U_j (0-based j).
    pub fn generator(theta: &Arc<ThetaMatrix>, j: usize) -> Self {
        Self::monomial(theta, lattice::unit_index(theta.dim(), j), Complex64::new(1.0, 0.0))
    }

    pub fn from_coeffs<I>(theta: &Arc<ThetaMatrix>, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Index, Complex64)>,
    {
        let n = theta.dim();
        let mut coeffs: BTreeMap<Index, Complex64> = BTreeMap::new();
        for (k, c) in items {
            if k.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: k.len(),
                });
            }
            *coeffs.entry(k).or_insert_with(c0) += c;
        }
        coeffs.retain(|_, c| *c != c0());
        Ok(NcElement {
            theta: theta.clone(),
            coeffs,
        })
    }

    pub fn theta(&self) -> &Arc<ThetaMatrix> {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_else(c0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Index, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &Index> {
        self.coeffs.keys()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// True when the support is contained in {0}.
    pub fn is_scalar(&self) -> bool {
        self.coeffs.keys().all(|k| k.iter().all(|&x| x == 0))
    }

    pub fn scalar_value(&self) -> Option<Complex64> {
        self.is_scalar().then(|| self.trace())
    }

    /// Largest sup-norm of a support point.
    pub fn radius(&self) -> i64 {
        self.coeffs.keys().map(|k| lattice::sup_norm(k)).max().unwrap_or(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn check(&self, other: &NcElement) -> Result<()> {
        if same_theta(&self.theta, &other.theta) {
            Ok(())
        } else {
            Err(Error::ThetaMismatch)
        }
    }

    /// Drops coefficients below `rel * max|a_k|`, plus exact zeros.
    pub fn prune(mut self, rel: f64) -> Self {
        let cut = rel * self.max_abs();
        self.coeffs.retain(|_, c| *c != c0() && c.norm() > cut);
        self
    }

    pub fn add(&self, other: &NcElement) -> Result<NcElement> {
        self.check(other)?;
        let mut out = self.clone();
        for (k, c) in &other.coeffs {
            *out.coeffs.entry(k.clone()).or_insert_with(c0) += c;
        }
        Ok(out.prune(DEFAULT_PRUNE))
    }

    pub fn sub(&self, other: &NcElement) -> Result<NcElement> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> NcElement {
        if c == c0() {
            return NcElement::zero(&self.theta);
        }
        NcElement {
            theta: self.theta.clone(),
            coeffs: self.coeffs.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }

    /// Adds c * other into self in place.
    pub fn axpy(&mut self, c: Complex64, other: &NcElement) -> Result<()> {
        self.check(other)?;
        for (k, v) in &other.coeffs {
            *self.coeffs.entry(k.clone()).or_insert_with(c0) += c * v;
        }
        Ok(())
    }

    pub fn mul(&self, other: &NcElement) -> Result<NcElement> {
        self.check(other)?;
        if let Some(c) = self.scalar_value() {
            return Ok(other.scale(c));
        }
        if let Some(c) = other.scalar_value() {
            return Ok(self.scale(c));
        }
        let mut acc: BTreeMap<Index, Complex64> = BTreeMap::new();
        for (k, a) in &self.coeffs {
            for (l, b) in &other.coeffs {
                let v = a * b * self.theta.phase(k, l);
                *acc.entry(lattice::add_index(k, l)).or_insert_with(c0) += v;
            }
        }
        Ok(NcElement {
            theta: self.theta.clone(),
            coeffs: acc,
        }
        .prune(DEFAULT_PRUNE))
    }

    /// The involution: (a U^k)* = conj(a) conj(phase(k,-k)) U^-k.
    pub fn adjoint(&self) -> NcElement {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, a)| {
                let mk = lattice::neg_index(k);
                let p = self.theta.phase(k, &mk).conj();
                (mk, a.conj() * p)
            })
            .collect();
        NcElement {
            theta: self.theta.clone(),
            coeffs,
        }
    }

    /// The canonical trace: the U^0 coefficient.
    pub fn trace(&self) -> Complex64 {
        self.coeff(&lattice::zero_index(self.dim()))
    }

    /// tau(u v*).
    pub fn inner(&self, other: &NcElement) -> Result<Complex64> {
        Ok(self.mul(&other.adjoint())?.trace())
    }

    /// The derivation delta_j (0-based): U^k -> k_j U^k.
    pub fn delta(&self, j: usize) -> NcElement {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(k, _)| k[j] != 0)
            .map(|(k, a)| (k.clone(), a * k[j] as f64))
            .collect();
        NcElement {
            theta: self.theta.clone(),
            coeffs,
        }
    }

    /// delta^alpha: U^k -> k^alpha U^k.
    pub fn delta_multi(&self, alpha: &[u32]) -> NcElement {
        let coeffs = self
            .coeffs
            .iter()
            .filter_map(|(k, a)| {
                let w: f64 = k
                    .iter()
                    .zip(alpha)
                    .map(|(&kj, &aj)| (kj as f64).powi(aj as i32))
                    .product();
                (w != 0.0).then(|| (k.clone(), a * w))
            })
            .collect();
        NcElement {
            theta: self.theta.clone(),
            coeffs,
        }
    }

    /// ||u||_s^2 = sum (1+|k|^2)^s |u_k|^2.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, a)| {
                let k2: f64 = k.iter().map(|&x| (x * x) as f64).sum();
                (1.0 + k2).powf(s) * a.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    /// Keeps only coefficients inside the box.
    pub fn truncate(&self, basis: &LatticeBox) -> NcElement {
        NcElement {
            theta: self.theta.clone(),
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| basis.contains(k))
                .map(|(k, a)| (k.clone(), *a))
                .collect(),
        }
    }

    /// Matrix of u -> a u on the box, (L_a)_{m,k} = a_{m-k} phase(m-k, k).
    pub fn left_mult_matrix(&self, basis: &LatticeBox) -> DMatrix<Complex64> {
        let d = basis.len();
        let mut m = DMatrix::zeros(d, d);
        for col in 0..d {
            let k = basis.point(col);
            for (l, a) in &self.coeffs {
                let target = lattice::add_index(l, &k);
                if let Some(row) = basis.position(&target) {
                    m[(row, col)] += a * self.theta.phase(l, &k);
                }
            }
        }
        m
    }

    pub fn to_vector(&self, basis: &LatticeBox) -> DVector<Complex64> {
        let mut v = DVector::zeros(basis.len());
        for (k, a) in &self.coeffs {
            if let Some(p) = basis.position(k) {
                v[p] = *a;
            }
        }
        v
    }

    pub fn from_vector(theta: &Arc<ThetaMatrix>, basis: &LatticeBox, v: &DVector<Complex64>) -> Self {
        let coeffs = v
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != c0())
            .map(|(p, c)| (basis.point(p), *c))
            .collect();
        NcElement {
            theta: theta.clone(),
            coeffs,
        }
        .prune(DEFAULT_PRUNE)
    }

    /// Truncated inverse on |k|_inf <= cutoff.
    ///
    /// Axes not touched by the support are pinned to zero: L_a preserves each coset
    /// of the sublattice spanned by the active axes, so the reduced system is the exact
    /// block containing e_0. The result is rejected when ||a b - 1||_0 > tol.
    pub fn invert(&self, cutoff: usize, tol: f64) -> Result<NcElement> {
        if let Some(c) = self.scalar_value() {
            if c == c0() {
                return Err(Error::NotInvertible {
                    condition: f64::INFINITY,
                });
            }
            return Ok(NcElement::scalar(&self.theta, c.inv()));
        }
        let n = self.dim();
        let active: Vec<bool> = (0..n)
            .map(|j| self.coeffs.keys().any(|k| k[j] != 0))
            .collect();
        let basis = LatticeBox::restricted(n, cutoff, &active);
        let l = self.left_mult_matrix(&basis);
        let inv = l
            .clone()
            .lu()
            .try_inverse()
            .ok_or(Error::NotInvertible {
                condition: f64::INFINITY,
            })?;
        let condition = one_norm(&l) * one_norm(&inv);
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::NotInvertible { condition });
        }
        let e0 = basis
            .position(&lattice::zero_index(n))
            .expect("origin is always in the box");
        let b = NcElement::from_vector(&self.theta, &basis, &inv.column(e0).into_owned());
        let residual = self.mul(&b)?.sub(&NcElement::one(&self.theta))?.l2_norm();
        if residual > tol {
            return Err(Error::TailTruncation {
                residual,
                tol,
                cutoff,
            });
        }
        Ok(b)
    }

    /// sum_{j < terms} a^j / j!, truncated to the box after every product.
    pub fn exp_series(&self, terms: usize, cutoff: usize) -> Result<NcElement> {
        let basis = LatticeBox::new(self.dim(), cutoff);
        let mut term = NcElement::one(&self.theta);
        let mut sum = term.clone();
        for j in 1..terms {
            term = term.mul(self)?.truncate(&basis).scale(Complex64::new(1.0 / j as f64, 0.0));
            sum = sum.add(&term)?;
        }
        Ok(sum)
    }

    pub fn to_record(&self) -> ElementRecord {
        ElementRecord {
            theta: (*self.theta).clone(),
            coefficients: self
                .coeffs
                .iter()
                .map(|(k, a)| CoefficientRecord {
                    k: k.to_vec(),
                    re: a.re,
                    im: a.im,
                })
                .collect(),
        }
    }

    pub fn from_record(rec: &ElementRecord) -> Result<NcElement> {
        let theta = Arc::new(rec.theta.clone());
        Self::from_record_with(&theta, &rec.coefficients)
    }

    pub fn from_record_with(theta: &Arc<ThetaMatrix>, coefficients: &[CoefficientRecord]) -> Result<NcElement> {
        NcElement::from_coeffs(
            theta,
            coefficients
                .iter()
                .map(|c| (c.k.iter().copied().collect(), Complex64::new(c.re, c.im))),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("element records always serialize")
    }

    pub fn from_json(s: &str) -> Result<NcElement> {
        let rec: ElementRecord = serde_json::from_str(s)?;
        Self::from_record(&rec)
    }
}

pub(crate) fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub k: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub theta: ThetaMatrix,
    pub coefficients: Vec<CoefficientRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallvec::smallvec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn t(theta: f64) -> Arc<ThetaMatrix> {
        Arc::new(ThetaMatrix::two(theta))
    }

    #[test]
    fn commutation_relation() {
        let th = t(0.25);
        let u1 = NcElement::generator(&th, 0);
        let u2 = NcElement::generator(&th, 1);
        let lhs = u2.mul(&u1).unwrap();
        let rhs = u1.mul(&u2).unwrap().scale(Complex64::i());
        assert_eq!(lhs.len(), 1);
        assert!((lhs.coeff(&[1, 1]) - rhs.coeff(&[1, 1])).norm() < 1e-15);
    }

    #[test]
    fn adjoint_is_inverse_of_unitary() {
        let th = t(0.3183);
        let u = NcElement::monomial(&th, smallvec![2, -3], c(1.0, 0.0));
        let p = u.mul(&u.adjoint()).unwrap();
        assert!((p.trace() - 1.0).norm() < 1e-14);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn inverse_of_two_plus_u1() {
        let th = t(0.25);
        let a = NcElement::scalar(&th, c(2.0, 0.0)).add(&NcElement::generator(&th, 0)).unwrap();
        let b = a.invert(12, 1e-3).unwrap();
        for j in 0..6 {
            let expect = 0.5 * (-0.5f64).powi(j);
            assert!((b.coeff(&[j as i64, 0]) - expect).norm() < 1e-10, "j={j}");
        }
        assert!(b.coeff(&[-1, 0]).norm() < 1e-12);
        match a.invert(12, 1e-10) {
            Err(Error::TailTruncation { residual, .. }) => {
                assert!((residual - 2f64.powi(-13)).abs() < 1e-8)
            }
            other => panic!("expected tail error, got {other:?}"),
        }
    }

    #[test]
    fn singular_inverse_reports_condition() {
        let th = t(0.25);
        let a = NcElement::scalar(&th, c(1.0, 0.0)).add(&NcElement::generator(&th, 0)).unwrap();
        assert!(matches!(a.invert(10, 1e-3), Err(Error::TailTruncation { .. }) | Err(Error::NotInvertible { .. })));
        assert!(matches!(NcElement::zero(&th).invert(4, 1e-3), Err(Error::NotInvertible { .. })));
    }

    #[test]
    fn theta_mismatch() {
        let a = NcElement::one(&t(0.1));
        let b = NcElement::one(&t(0.2));
        assert_eq!(a.mul(&b), Err(Error::ThetaMismatch));
    }

    #[test]
    fn json_roundtrip() {
        let th = t(0.1);
        let a = NcElement::from_coeffs(&th, vec![(smallvec![1, 0], c(1.5, -2.0)), (smallvec![0, -2], c(0.0, 1.0))]).unwrap();
        let back = NcElement::from_json(&a.to_json()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn left_mult_matches_product() {
        let th = t(0.37);
        let a = NcElement::from_coeffs(&th, vec![(smallvec![1, 1], c(0.5, 0.2)), (smallvec![0, -1], c(1.0, 0.0))]).unwrap();
        let u = NcElement::from_coeffs(&th, vec![(smallvec![0, 0], c(1.0, 1.0)), (smallvec![-1, 2], c(0.3, 0.0))]).unwrap();
        let basis = LatticeBox::new(2, 4);
        let lhs = a.left_mult_matrix(&basis) * u.to_vector(&basis);
        let rhs = a.mul(&u).unwrap().to_vector(&basis);
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn sobolev_weights() {
        let th = t(0.0);
        let a = NcElement::monomial(&th, smallvec![3, 4], c(2.0, 0.0));
        assert!((a.sobolev_norm(1.0) - 2.0 * 26f64.sqrt()).abs() < 1e-12);
        assert!((a.delta(1).coeff(&[3, 4]) - 8.0).norm() < 1e-15);
        assert!((a.delta_multi(&[2, 1]).coeff(&[3, 4]) - 72.0).norm() < 1e-12);
    }
}
