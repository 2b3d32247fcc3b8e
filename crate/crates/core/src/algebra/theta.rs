use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ANTISYMMETRY_TOL: f64 = 1e-12;

/// Real antisymmetric n x n deformation matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ThetaMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl ThetaMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidTheta("dimension must be at least 1".into()));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidTheta(format!(
                    "row {i} has length {} but the matrix has {n} rows",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidTheta("non-finite entry".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let d = entries[i * n + j] + entries[j * n + i];
                if d.abs() > ANTISYMMETRY_TOL {
                    return Err(Error::InvalidTheta(format!(
                        "not antisymmetric at ({i},{j}): deviation {d:.3e}"
                    )));
                }
            }
        }
        Ok(ThetaMatrix { n, entries })
    }

    pub fn zero(n: usize) -> Self {
        ThetaMatrix {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// The two-dimensional matrix with theta_12 = theta.
    pub fn two(theta: f64) -> Self {
        ThetaMatrix {
            n: 2,
            entries: vec![0.0, theta, -theta, 0.0],
        }
    }

    /// Builds from upper-triangular entries, listed row by row (theta_12, theta_13, ..., theta_23, ...).
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        let expected = n * (n.saturating_sub(1)) / 2;
        if upper.len() != expected {
            return Err(Error::InvalidTheta(format!(
                "expected {expected} upper entries, got {}",
                upper.len()
            )));
        }
        let mut entries = vec![0.0; n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = *it.next().unwrap();
                entries[i * n + j] = v;
                entries[j * n + i] = -v;
            }
        }
        ThetaMatrix::new(entries.chunks(n).map(|r| r.to_vec()).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// Multiplication cocycle: U^k U^l = phase(k, l) U^(k+l).
    pub fn phase(&self, k: &[i64], l: &[i64]) -> Complex64 {
        let s = self.phase_exponent(k, l);
        if s == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        Complex64::from_polar(1.0, 2.0 * PI * s)
    }

    fn phase_exponent(&self, k: &[i64], l: &[i64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for j in 1..n {
            if k[j] == 0 {
                continue;
            }
            let mut inner = 0.0;
            for m in 0..j {
                inner += self.entries[m * n + j] * l[m] as f64;
            }
            s += inner * k[j] as f64;
        }
        s
    }
}

impl TryFrom<Vec<Vec<f64>>> for ThetaMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        ThetaMatrix::new(rows)
    }
}

impl From<ThetaMatrix> for Vec<Vec<f64>> {
    fn from(t: ThetaMatrix) -> Self {
        t.rows()
    }
}
