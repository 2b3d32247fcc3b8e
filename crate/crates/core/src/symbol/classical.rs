use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::expr::{from_node_table, to_node_table, EvalPolicy, Evaluator, NestedNode, NodeRecord, SymbolExpr};
use super::{Cutoff, LatticeSymbol};
use crate::algebra::{NcElement, ThetaMatrix};
use crate::error::{Error, Result};
use crate::lattice::{self, MultiIndex};

/// A symbol homogeneous of a fixed degree. With a weight w the homogeneity is
/// parametric: rho(t xi; t^w lambda) = t^degree rho(xi; lambda).
#[derive(Clone, Debug)]
pub struct HomogeneousSymbol {
    pub expr: SymbolExpr,
    pub degree: f64,
    pub weight: Option<f64>,
}

impl HomogeneousSymbol {
    pub fn new(expr: SymbolExpr, degree: f64) -> Self {
        HomogeneousSymbol {
            expr,
            degree,
            weight: None,
        }
    }

    /// Largest relative deviation ||rho(t xi) - t^d rho(xi)||_0 / ||t^d rho(xi)||_0 over the samples.
    pub fn check_homogeneity(
        &self,
        theta: &Arc<ThetaMatrix>,
        samples: &[(Vec<f64>, Option<Complex64>)],
        scales: &[f64],
        policy: EvalPolicy,
    ) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (xi, lam) in samples {
            let base = self.expr.eval(theta, xi, *lam, policy)?;
            for &t in scales {
                let xt: Vec<f64> = xi.iter().map(|x| x * t).collect();
                let lt = match (lam, self.weight) {
                    (Some(l), Some(w)) => Some(l * t.powf(w)),
                    (l, _) => *l,
                };
                let scaled = self.expr.eval(theta, &xt, lt, policy)?;
                let expect = base.scale(Complex64::new(t.powf(self.degree), 0.0));
                let denom = expect.l2_norm().max(1e-300);
                worst = worst.max(scaled.sub(&expect)?.l2_norm() / denom);
            }
        }
        Ok(worst)
    }
}

/// A classical symbol sum_j rho_{q-j}, with rho_{q-j} homogeneous of degree q - j,
/// excised near the origin by (1 - chi).
#[derive(Clone, Debug)]
pub struct ClassicalSymbol {
    theta: Arc<ThetaMatrix>,
    order: f64,
    weight: Option<f64>,
    components: Vec<SymbolExpr>,
    cutoff: Cutoff,
    policy: EvalPolicy,
}

impl ClassicalSymbol {
    pub fn new(theta: &Arc<ThetaMatrix>, order: f64, components: Vec<SymbolExpr>) -> Self {
        ClassicalSymbol {
            theta: theta.clone(),
            order,
            weight: None,
            components,
            cutoff: Cutoff::None,
            policy: EvalPolicy::default(),
        }
    }

    /// Symbol of the differential operator sum_alpha a_alpha delta^alpha:
    /// rho(xi) = sum_alpha a_alpha xi^alpha, grouped by |alpha|.
    pub fn differential(theta: &Arc<ThetaMatrix>, terms: &BTreeMap<MultiIndex, NcElement>) -> Result<Self> {
        let n = theta.dim();
        let mut order = 0u32;
        for (alpha, a) in terms {
            if alpha.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: alpha.len(),
                });
            }
            if !crate::algebra::same_theta(a.theta(), theta) {
                return Err(Error::ThetaMismatch);
            }
            if !a.is_zero() {
                order = order.max(lattice::order(alpha));
            }
        }
        let components = (0..=order)
            .map(|j| {
                let deg = order - j;
                SymbolExpr::sum(
                    terms
                        .iter()
                        .filter(|(alpha, _)| lattice::order(alpha) == deg)
                        .map(|(alpha, a)| SymbolExpr::constant(a.clone()).mul(&SymbolExpr::xi(alpha.clone())))
                        .collect(),
                )
            })
            .collect();
        Ok(Self::new(theta, f64::from(order), components))
    }

    pub fn with_cutoff(mut self, cutoff: Cutoff) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_policy(mut self, policy: EvalPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_weight(mut self, weight: Option<f64>) -> Self {
        self.weight = weight;
        self
    }

    pub fn theta(&self) -> &Arc<ThetaMatrix> {
        &self.theta
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn weight(&self) -> Option<f64> {
        self.weight
    }

    pub fn cutoff(&self) -> Cutoff {
        self.cutoff
    }

    pub fn policy(&self) -> EvalPolicy {
        self.policy
    }

    /// Number of stored components.
    pub fn depth(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[SymbolExpr] {
        &self.components
    }

    /// rho_{q-j}; zero past the stored depth.
    pub fn component_expr(&self, j: usize) -> SymbolExpr {
        self.components.get(j).cloned().unwrap_or_else(SymbolExpr::zero)
    }

    pub fn component(&self, j: usize) -> HomogeneousSymbol {
        HomogeneousSymbol {
            expr: self.component_expr(j),
            degree: self.order - j as f64,
            weight: self.weight,
        }
    }

    pub fn principal(&self) -> HomogeneousSymbol {
        self.component(0)
    }

    pub fn truncated(&self, depth: usize) -> Self {
        let mut s = self.clone();
        s.components.truncate(depth);
        s
    }

    pub fn depends_on_lambda(&self) -> bool {
        self.components.iter().any(|c| c.depends_on_lambda())
    }

    pub fn coefficient_radius(&self) -> i64 {
        self.components.iter().map(|c| c.coefficient_radius()).max().unwrap_or(0)
    }

    /// All components at one point, sharing the subtree cache.
    pub fn eval_components(&self, xi: &[f64], lambda: Option<Complex64>) -> Result<Vec<NcElement>> {
        let mut ev = Evaluator::new(&self.theta, xi, lambda, self.policy);
        self.components
            .iter()
            .enumerate()
            .map(|(j, c)| ev.eval(c).map_err(|e| e.at(format!("component[{j}]"))))
            .collect()
    }

    /// (1 - chi(xi)) sum_j rho_{q-j}(xi; lambda).
    pub fn eval(&self, xi: &[f64], lambda: Option<Complex64>) -> Result<NcElement> {
        let w = self.cutoff.weight(xi);
        if w == 0.0 {
            return Ok(NcElement::zero(&self.theta));
        }
        let mut acc = NcElement::zero(&self.theta);
        for v in self.eval_components(xi, lambda)? {
            acc.axpy(Complex64::new(w, 0.0), &v)?;
        }
        Ok(acc.prune(crate::algebra::DEFAULT_PRUNE))
    }

    pub fn at_lambda(&self, lambda: Complex64) -> BoundSymbol<'_> {
        BoundSymbol { symbol: self, lambda }
    }

    /// Tree form when the expanded components stay below `NESTED_LIMIT` nodes, the
    /// shared node table otherwise.
    pub fn to_record(&self) -> ClassicalSymbolRecord {
        let size = self
            .components
            .iter()
            .fold(0usize, |acc, c| acc.saturating_add(c.tree_size(NESTED_LIMIT + 1)));
        let components = if size <= NESTED_LIMIT {
            ComponentsRecord::Nested(self.components.iter().map(|c| c.to_nested()).collect())
        } else {
            let (nodes, roots) = to_node_table(&self.components);
            ComponentsRecord::Shared { nodes, roots }
        };
        ClassicalSymbolRecord {
            theta: (*self.theta).clone(),
            order: self.order,
            weight: self.weight,
            cutoff: self.cutoff,
            policy: self.policy,
            components,
        }
    }

    pub fn from_record(rec: &ClassicalSymbolRecord) -> Result<Self> {
        let theta = Arc::new(rec.theta.clone());
        let components = match &rec.components {
            ComponentsRecord::Nested(v) => v
                .iter()
                .map(|c| SymbolExpr::from_nested(&theta, c))
                .collect::<Result<_>>()?,
            ComponentsRecord::Shared { nodes, roots } => from_node_table(&theta, nodes, roots)?,
        };
        Ok(ClassicalSymbol {
            theta,
            order: rec.order,
            weight: rec.weight,
            components,
            cutoff: rec.cutoff,
            policy: rec.policy,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("symbol records always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: ClassicalSymbolRecord = serde_json::from_str(s)?;
        Self::from_record(&rec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSymbolRecord {
    pub theta: ThetaMatrix,
    pub order: f64,
    #[serde(default)]
    pub weight: Option<f64>,
    #[serde(default)]
    pub cutoff: Cutoff,
    #[serde(default)]
    pub policy: EvalPolicy,
    pub components: ComponentsRecord,
}

/// Expanded-tree size above which symbols are written as a shared node table.
pub const NESTED_LIMIT: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentsRecord {
    /// One tree per component.
    Nested(Vec<NestedNode>),
    /// Node table with children before parents; `roots` indexes the components.
    Shared { nodes: Vec<NodeRecord>, roots: Vec<usize> },
}

impl LatticeSymbol for ClassicalSymbol {
    fn theta(&self) -> &Arc<ThetaMatrix> {
        &self.theta
    }

    fn value_at(&self, k: &[i64]) -> Result<NcElement> {
        self.eval(&lattice::as_f64(k), None)
    }
}

/// A parametric symbol with lambda fixed.
#[derive(Clone, Copy, Debug)]
pub struct BoundSymbol<'a> {
    pub symbol: &'a ClassicalSymbol,
    pub lambda: Complex64,
}

impl LatticeSymbol for BoundSymbol<'_> {
    fn theta(&self) -> &Arc<ThetaMatrix> {
        &self.symbol.theta
    }

    fn value_at(&self, k: &[i64]) -> Result<NcElement> {
        self.symbol.eval(&lattice::as_f64(k), Some(self.lambda))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallvec::smallvec;

    fn laplacian(theta: &Arc<ThetaMatrix>) -> ClassicalSymbol {
        let mut terms = BTreeMap::new();
        terms.insert(smallvec![2, 0], NcElement::one(theta));
        terms.insert(smallvec![0, 2], NcElement::one(theta));
        terms.insert(smallvec![0, 0], NcElement::one(theta));
        ClassicalSymbol::differential(theta, &terms).unwrap()
    }

    #[test]
    fn differential_components() {
        let t = Arc::new(ThetaMatrix::two(0.2));
        let s = laplacian(&t);
        assert_eq!(s.order(), 2.0);
        assert_eq!(s.depth(), 3);
        assert!(s.component_expr(1).is_zero());
        let v = s.eval(&[3.0, -1.0], None).unwrap();
        assert!((v.trace() - 11.0).norm() < 1e-14);
        let h = s.principal();
        let dev = h
            .check_homogeneity(&t, &[(vec![0.3, 0.8], None)], &[0.5, 2.0, 7.0], EvalPolicy::default())
            .unwrap();
        assert!(dev < 1e-14);
    }

    #[test]
    fn json_roundtrip() {
        let t = Arc::new(ThetaMatrix::two(0.2));
        let s = laplacian(&t).with_cutoff(Cutoff::Smooth { radius: 0.5, width: 0.5 });
        let back = ClassicalSymbol::from_json(&s.to_json()).unwrap();
        assert_eq!(back.cutoff(), s.cutoff());
        let a = s.eval(&[1.5, 2.0], None).unwrap();
        let b = back.eval(&[1.5, 2.0], None).unwrap();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert!(v["components"][0]["op"].is_string());
        assert!(v["components"][0]["args"].is_array());
    }

    #[test]
    fn shared_table_roundtrip() {
        let t = Arc::new(ThetaMatrix::two(0.2));
        let s = laplacian(&t);
        let (nodes, roots) = to_node_table(s.components());
        let mut rec = s.to_record();
        rec.components = ComponentsRecord::Shared { nodes, roots };
        let back = ClassicalSymbol::from_json(&serde_json::to_string(&rec).unwrap()).unwrap();
        assert_eq!(s.eval(&[0.5, 2.0], None).unwrap(), back.eval(&[0.5, 2.0], None).unwrap());
    }

    #[test]
    fn cutoff_kills_origin() {
        let t = Arc::new(ThetaMatrix::two(0.2));
        let s = laplacian(&t).with_cutoff(Cutoff::Smooth { radius: 0.5, width: 0.5 });
        assert!(s.value_at(&[0, 0]).unwrap().is_zero());
        assert!((s.value_at(&[1, 0]).unwrap().trace() - 2.0).norm() < 1e-14);
    }
}
