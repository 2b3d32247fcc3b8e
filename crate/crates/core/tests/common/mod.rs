#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use smallvec::smallvec;

use nctorus::calculus::sharp;
use nctorus::lattice::{self, Index, MultiIndex};
use nctorus::symbol::{ClassicalSymbol, SymbolExpr};
use nctorus::{NcElement, ThetaMatrix};

pub fn theta2(t: f64) -> Arc<ThetaMatrix> {
    Arc::new(ThetaMatrix::two(t))
}

pub fn cplx(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Up to `terms` monomials with |k|_inf <= radius and coefficients in the unit square.
pub fn random_element(rng: &mut impl Rng, theta: &Arc<ThetaMatrix>, radius: i64, terms: usize) -> NcElement {
    let n = theta.dim();
    let count = rng.gen_range(1..=terms);
    let items: Vec<(Index, Complex64)> = (0..count)
        .map(|_| {
            let k: Index = (0..n).map(|_| rng.gen_range(-radius..=radius)).collect();
            (k, cplx(rng))
        })
        .collect();
    NcElement::from_coeffs(theta, items).unwrap()
}

/// Symbol of sum_{|alpha| <= order} a_alpha delta^alpha with random coefficients.
pub fn random_differential(rng: &mut impl Rng, theta: &Arc<ThetaMatrix>, order: u32, radius: i64) -> ClassicalSymbol {
    let n = theta.dim();
    let mut terms: BTreeMap<MultiIndex, NcElement> = BTreeMap::new();
    for s in 0..=order {
        for alpha in lattice::multi_indices(n, s) {
            terms.insert(alpha, random_element(rng, theta, radius, 3));
        }
    }
    ClassicalSymbol::differential(theta, &terms).unwrap()
}

/// delta_1^2 + ... + delta_n^2 + shift.
pub fn laplacian(theta: &Arc<ThetaMatrix>, shift: f64) -> ClassicalSymbol {
    let n = theta.dim();
    let mut terms: BTreeMap<MultiIndex, NcElement> = BTreeMap::new();
    for j in 0..n {
        let mut a: MultiIndex = smallvec![0; n];
        a[j] = 2;
        terms.insert(a, NcElement::one(theta));
    }
    if shift != 0.0 {
        terms.insert(smallvec![0; n], NcElement::scalar(theta, Complex64::new(shift, 0.0)));
    }
    ClassicalSymbol::differential(theta, &terms).unwrap()
}

/// k = exp(h) with h = (0.2 / sqrt 2)(U1 + U1*), so ||h||_0 = 0.2.
pub fn conformal_factor(theta: &Arc<ThetaMatrix>) -> NcElement {
    let u1 = NcElement::generator(theta, 0);
    let h = u1
        .add(&u1.adjoint())
        .unwrap()
        .scale(Complex64::new(0.2 / 2f64.sqrt(), 0.0));
    assert!((h.l2_norm() - 0.2).abs() < 1e-14);
    h.exp_series(30, 8).unwrap()
}

/// Symbol of k Delta k + shift, composed exactly with the sharp product.
pub fn k_laplacian_k(theta: &Arc<ThetaMatrix>, shift: f64) -> ClassicalSymbol {
    let k = ClassicalSymbol::new(theta, 0.0, vec![SymbolExpr::constant(conformal_factor(theta))]);
    let p = sharp(&k, &sharp(&laplacian(theta, 0.0), &k, 2).unwrap(), 2).unwrap();
    if shift == 0.0 {
        return p;
    }
    let mut comps = p.components().to_vec();
    comps[2] = comps[2].add(&SymbolExpr::scalar(Complex64::new(shift, 0.0)));
    ClassicalSymbol::new(theta, p.order(), comps)
}

/// Largest |entry| of a - b restricted to the given positions.
pub fn max_entry(a: &nctorus::linalg::CMatrix, b: &nctorus::linalg::CMatrix, pos: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for &i in pos {
        for &j in pos {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}
