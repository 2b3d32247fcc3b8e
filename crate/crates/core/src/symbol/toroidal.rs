use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;

use super::{Interpolant, LatticeSymbol};
use crate::algebra::{NcElement, ThetaMatrix};
use crate::error::Result;
use crate::lattice::{Index, LatticeBox};

/// A symbol known only at lattice points; zero outside the table.
#[derive(Clone, Debug)]
pub struct ToroidalSymbolTable {
    theta: Arc<ThetaMatrix>,
    values: BTreeMap<Index, NcElement>,
}

impl ToroidalSymbolTable {
    pub fn new(theta: &Arc<ThetaMatrix>) -> Self {
        ToroidalSymbolTable {
            theta: theta.clone(),
            values: BTreeMap::new(),
        }
    }

    pub fn from_fn<F>(theta: &Arc<ThetaMatrix>, basis: &LatticeBox, f: F) -> Result<Self>
    where
        F: Fn(&[i64]) -> Result<NcElement>,
    {
        let mut t = Self::new(theta);
        for k in basis.points() {
            let v = f(&k)?;
            t.values.insert(k, v);
        }
        Ok(t)
    }

    /// Tabulates any lattice symbol on a box.
    pub fn sample(sym: &dyn LatticeSymbol, basis: &LatticeBox) -> Result<Self> {
        Self::from_fn(sym.theta(), basis, |k| sym.value_at(k))
    }

    pub fn insert(&mut self, k: Index, v: NcElement) {
        self.values.insert(k, v);
    }

    pub fn get(&self, k: &[i64]) -> Option<&NcElement> {
        self.values.get(k)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Smooth extension rho~(xi) = sum_k phi(xi - k) rho(k).
    pub fn extend<'a>(&'a self, phi: &'a Interpolant) -> SmoothExtension<'a> {
        SmoothExtension { table: self, phi }
    }
}

impl LatticeSymbol for ToroidalSymbolTable {
    fn theta(&self) -> &Arc<ThetaMatrix> {
        &self.theta
    }

    fn value_at(&self, k: &[i64]) -> Result<NcElement> {
        Ok(self
            .values
            .get(k)
            .cloned()
            .unwrap_or_else(|| NcElement::zero(&self.theta)))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SmoothExtension<'a> {
    table: &'a ToroidalSymbolTable,
    phi: &'a Interpolant,
}

impl SmoothExtension<'_> {
    pub fn eval(&self, xi: &[f64]) -> Result<NcElement> {
        let mut acc = NcElement::zero(&self.table.theta);
        for (k, v) in &self.table.values {
            let shifted: Vec<f64> = xi.iter().zip(k).map(|(x, &kj)| x - kj as f64).collect();
            let w = self.phi.phi(&shifted);
            if w != 0.0 {
                acc.axpy(Complex64::new(w, 0.0), v)?;
            }
        }
        Ok(acc.prune(crate::algebra::DEFAULT_PRUNE))
    }
}
