//! Toroidal quantization on the Fourier box and truncated operators.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{same_theta, NcElement, ThetaMatrix};
use crate::error::{Error, Result};
use crate::geometry::{loglog_fit, DecayFit};
use crate::lattice::{self, LatticeBox};
use crate::linalg::{self, CMatrix};
use crate::symbol::{LatticeSymbol, ToroidalSymbolTable};

/// An operator compressed to span{U^k : |k|_inf <= N}, in lexicographic order.
#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    theta: Arc<ThetaMatrix>,
    basis: LatticeBox,
    matrix: CMatrix,
    pub provenance: String,
}

impl TruncatedOperator {
    pub fn new(theta: &Arc<ThetaMatrix>, cutoff: usize, matrix: CMatrix, provenance: impl Into<String>) -> Result<Self> {
        let basis = LatticeBox::new(theta.dim(), cutoff);
        if matrix.nrows() != basis.len() || matrix.ncols() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: matrix.nrows(),
            });
        }
        Ok(TruncatedOperator {
            theta: theta.clone(),
            basis,
            matrix,
            provenance: provenance.into(),
        })
    }

    pub fn identity(theta: &Arc<ThetaMatrix>, cutoff: usize) -> Self {
        let basis = LatticeBox::new(theta.dim(), cutoff);
        let d = basis.len();
        TruncatedOperator {
            theta: theta.clone(),
            basis,
            matrix: CMatrix::identity(d, d),
            provenance: "identity".into(),
        }
    }

    /// Left multiplication by an element, compressed to the box.
    pub fn left_mult(a: &NcElement, cutoff: usize) -> Self {
        let basis = LatticeBox::new(a.dim(), cutoff);
        TruncatedOperator {
            theta: a.theta().clone(),
            matrix: a.left_mult_matrix(&basis),
            basis,
            provenance: "left multiplication".into(),
        }
    }

    pub fn theta(&self) -> &Arc<ThetaMatrix> {
        &self.theta
    }

    pub fn basis(&self) -> &LatticeBox {
        &self.basis
    }

    pub fn cutoff(&self) -> usize {
        self.basis.cutoff()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn with_matrix(&self, matrix: CMatrix, provenance: impl Into<String>) -> Self {
        TruncatedOperator {
            theta: self.theta.clone(),
            basis: self.basis.clone(),
            matrix,
            provenance: provenance.into(),
        }
    }

    fn check(&self, other: &TruncatedOperator) -> Result<()> {
        if !same_theta(&self.theta, &other.theta) {
            return Err(Error::ThetaMismatch);
        }
        if self.basis != other.basis {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    pub fn compose(&self, other: &TruncatedOperator) -> Result<Self> {
        self.check(other)?;
        Ok(self.with_matrix(&self.matrix * &other.matrix, "product"))
    }

    pub fn add(&self, other: &TruncatedOperator) -> Result<Self> {
        self.check(other)?;
        Ok(self.with_matrix(&self.matrix + &other.matrix, "sum"))
    }

    pub fn sub(&self, other: &TruncatedOperator) -> Result<Self> {
        self.check(other)?;
        Ok(self.with_matrix(&self.matrix - &other.matrix, "difference"))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.with_matrix(self.matrix.map(|x| x * c), "scaled")
    }

    /// T - lambda I.
    pub fn shift(&self, lambda: Complex64) -> Self {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] -= lambda;
        }
        self.with_matrix(m, "shifted")
    }

    pub fn adjoint(&self) -> Self {
        self.with_matrix(self.matrix.adjoint(), "adjoint")
    }

    /// The image of an element (coefficients outside the box are dropped).
    pub fn apply(&self, u: &NcElement) -> NcElement {
        let v = &self.matrix * u.to_vector(&self.basis);
        NcElement::from_vector(&self.theta, &self.basis, &v)
    }

    /// Toroidal symbol k -> T(U^k) (U^k)^{-1}, restricted to the box.
    pub fn toroidal_symbol(&self) -> Result<ToroidalSymbolTable> {
        ToroidalSymbolTable::from_fn(&self.theta, &self.basis, |k| {
            let uk = NcElement::monomial(&self.theta, k.iter().copied().collect(), Complex64::new(1.0, 0.0));
            self.apply(&uk).mul(&uk.adjoint())
        })
    }

    /// Matrix restricted to the given basis positions (rows and columns).
    pub fn restrict(&self, positions: &[usize]) -> CMatrix {
        let d = positions.len();
        CMatrix::from_fn(d, d, |i, j| self.matrix[(positions[i], positions[j])])
    }

    pub fn to_record(&self) -> OperatorRecord {
        OperatorRecord {
            n: self.theta.dim(),
            cutoff: self.cutoff(),
            order: "lex".into(),
            theta: (*self.theta).clone(),
            provenance: self.provenance.clone(),
            entries: self
                .matrix
                .row_iter()
                .flat_map(|r| r.iter().map(|x| [x.re, x.im]).collect::<Vec<_>>())
                .collect(),
        }
    }

    pub fn from_record(rec: &OperatorRecord) -> Result<Self> {
        let theta = Arc::new(rec.theta.clone());
        let basis = LatticeBox::new(rec.n, rec.cutoff);
        let d = basis.len();
        if rec.entries.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: rec.entries.len(),
            });
        }
        let m = CMatrix::from_row_iterator(d, d, rec.entries.iter().map(|e| Complex64::new(e[0], e[1])));
        TruncatedOperator::new(&theta, rec.cutoff, m, rec.provenance.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub n: usize,
    pub cutoff: usize,
    pub order: String,
    pub theta: ThetaMatrix,
    pub provenance: String,
    /// Row-major [re, im] pairs.
    pub entries: Vec<[f64; 2]>,
}

/// The matrix of P_rho: U^k -> rho(k) U^k, compressed to |k|_inf <= cutoff.
pub fn quantize(sym: &dyn LatticeSymbol, cutoff: usize) -> Result<TruncatedOperator> {
    let theta = sym.theta().clone();
    let basis = LatticeBox::new(theta.dim(), cutoff);
    let d = basis.len();
    let columns: Vec<Vec<(usize, Complex64)>> = (0..d)
        .into_par_iter()
        .map(|col| {
            let k = basis.point(col);
            let rho = sym.value_at(&k)?;
            let mut entries = Vec::new();
            for (l, a) in rho.iter() {
                let m = lattice::add_index(l, &k);
                if let Some(row) = basis.position(&m) {
                    entries.push((row, a * theta.phase(l, &k)));
                }
            }
            Ok(entries)
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(d, d);
    for (col, entries) in columns.into_iter().enumerate() {
        for (row, v) in entries {
            m[(row, col)] += v;
        }
    }
    Ok(TruncatedOperator {
        theta,
        basis,
        matrix: m,
        provenance: "quantized symbol".into(),
    })
}

/// Diagonal Sobolev weights (1 + |k|^2)^{s/2} on the box.
pub fn sobolev_weights(basis: &LatticeBox, s: f64) -> Vec<f64> {
    (0..basis.len())
        .map(|p| {
            let k = basis.point(p);
            let k2: f64 = k.iter().map(|&x| (x * x) as f64).sum();
            (1.0 + k2).powf(s / 2.0)
        })
        .collect()
}

/// ||T||_{H^s -> H^t} on the box: the spectral norm of D_t T D_s^{-1}.
pub fn op_norm(t: &TruncatedOperator, s: f64, target: f64) -> f64 {
    op_norm_matrix(t.basis(), t.matrix(), s, target)
}

pub fn op_norm_matrix(basis: &LatticeBox, m: &CMatrix, s: f64, target: f64) -> f64 {
    if s == 0.0 && target == 0.0 {
        return linalg::spectral_norm(m);
    }
    let ws = sobolev_weights(basis, s);
    let wt = sobolev_weights(basis, target);
    let weighted = CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * (wt[i] / ws[j]));
    linalg::spectral_norm(&weighted)
}

/// Positions of the modes |k|_inf <= cutoff - margin.
pub fn interior_projector(basis: &LatticeBox, margin: usize) -> Result<Vec<usize>> {
    if margin >= basis.cutoff() {
        return Err(Error::Margin {
            margin,
            cutoff: basis.cutoff(),
        });
    }
    let inner = (basis.cutoff() - margin) as i64;
    Ok((0..basis.len())
        .filter(|&p| lattice::sup_norm(&basis.point(p)) <= inner)
        .collect())
}

/// Spectral norm of (A - B) restricted to the interior modes.
pub fn interior_distance(a: &TruncatedOperator, b: &TruncatedOperator, margin: usize) -> Result<f64> {
    let pos = interior_projector(a.basis(), margin)?;
    let d = a.sub(b)?;
    Ok(linalg::spectral_norm(&d.restrict(&pos)))
}

/// Singular-value decay of a truncated operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchattenTail {
    /// Fit of log mu_k against log (k+1) over the index window [0.1 d, 0.8 d).
    pub fit: DecayFit,
    pub q: f64,
    /// Weak Schatten quasi-norm sup_N N^{-1+1/q} sum_{k<N} mu_k (with 1/log N for q = 1).
    pub weak_norm: f64,
    pub singular_values: Vec<f64>,
}

pub fn schatten_tail(t: &TruncatedOperator, q: f64) -> Result<SchattenTail> {
    if q < 1.0 {
        return Err(Error::Precondition(format!("weak Schatten exponent {q} must be >= 1")));
    }
    let mu = linalg::singular_values(t.matrix());
    let d = mu.len();
    let lo = d / 10;
    let hi = (8 * d) / 10;
    if hi <= lo + 2 {
        return Err(Error::FitWindow { size: hi.saturating_sub(lo) });
    }
    let xs: Vec<f64> = (lo..hi).map(|k| (k + 1) as f64).collect();
    let fit = loglog_fit(&xs, &mu[lo..hi])?;
    let mut partial = 0.0;
    let mut weak: f64 = 0.0;
    for (k, m) in mu.iter().enumerate() {
        partial += m;
        let nn = (k + 1) as f64;
        let v = if q == 1.0 {
            if nn < 2.0 {
                continue;
            }
            partial / nn.ln()
        } else {
            partial * nn.powf(-1.0 + 1.0 / q)
        };
        weak = weak.max(v);
    }
    Ok(SchattenTail {
        fit,
        q,
        weak_norm: weak,
        singular_values: mu,
    })
}

/// Singular values as CSV rows "index,value".
pub fn singular_values_csv(mu: &[f64]) -> String {
    let mut s = String::from("index,singular_value\n");
    for (i, m) in mu.iter().enumerate() {
        s.push_str(&format!("{i},{m:.17e}\n"));
    }
    s
}
