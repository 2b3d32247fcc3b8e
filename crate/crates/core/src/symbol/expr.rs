use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{CoefficientRecord, NcElement, ThetaMatrix};
use crate::error::{Error, Result};
use crate::lattice::MultiIndex;

/// Truncation data for inverses taken during evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPolicy {
    /// Box cutoff used by `NcElement::invert`.
    pub cutoff: usize,
    /// Accepted residual ||a b - 1||_0.
    pub tol: f64,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        EvalPolicy {
            cutoff: 10,
            tol: 1e-10,
        }
    }
}

#[derive(Debug)]
pub enum Node {
    /// c * 1, carried without a theta binding.
    Scalar(Complex64),
    Constant(NcElement),
    XiMonomial(MultiIndex),
    Lambda,
    Sum(Vec<SymbolExpr>),
    /// Ordered product.
    Product(Vec<SymbolExpr>),
    Inverse(SymbolExpr),
    /// Principal power of a scalar-valued subtree.
    ScalarPower(SymbolExpr, Complex64),
    /// <xi> = (1 + |xi|^2)^(1/2) in dimension n.
    BracketNorm(usize),
}

/// Immutable, structurally shared symbol expression.
#[derive(Clone, Debug)]
pub struct SymbolExpr(Arc<Node>);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

impl SymbolExpr {
    fn wrap(node: Node) -> Self {
        SymbolExpr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    /// Identity of the shared node.
    pub fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as *const () as usize
    }

    pub fn ptr_eq(&self, other: &SymbolExpr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn scalar(v: Complex64) -> Self {
        Self::wrap(Node::Scalar(v))
    }

    pub fn zero() -> Self {
        Self::scalar(c(0.0))
    }

    pub fn one() -> Self {
        Self::scalar(c(1.0))
    }

    pub fn constant(a: NcElement) -> Self {
        if let Some(v) = a.scalar_value() {
            return Self::scalar(v);
        }
        Self::wrap(Node::Constant(a))
    }

    pub fn xi(alpha: MultiIndex) -> Self {
        if alpha.iter().all(|&a| a == 0) {
            return Self::one();
        }
        Self::wrap(Node::XiMonomial(alpha))
    }

    /// xi_j in dimension n.
    pub fn xi_j(n: usize, j: usize) -> Self {
        let mut alpha: MultiIndex = smallvec::smallvec![0; n];
        alpha[j] = 1;
        Self::xi(alpha)
    }

    /// |xi|^2 in dimension n.
    pub fn xi_norm_sq(n: usize) -> Self {
        Self::sum(
            (0..n)
                .map(|j| {
                    let mut alpha: MultiIndex = smallvec::smallvec![0; n];
                    alpha[j] = 2;
                    Self::xi(alpha)
                })
                .collect(),
        )
    }

    pub fn lambda() -> Self {
        Self::wrap(Node::Lambda)
    }

    pub fn bracket(n: usize) -> Self {
        Self::wrap(Node::BracketNorm(n))
    }

    pub fn as_scalar(&self) -> Option<Complex64> {
        match self.node() {
            Node::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self.node() {
            Node::Scalar(v) => *v == c(0.0),
            Node::Constant(a) => a.is_zero(),
            Node::Sum(t) => t.is_empty(),
            _ => false,
        }
    }

    pub fn is_one(&self) -> bool {
        self.as_scalar() == Some(c(1.0))
    }

    /// Flattening sum; scalar and constant leaves are folded together, zeros dropped.
    pub fn sum(terms: Vec<SymbolExpr>) -> Self {
        let mut flat = Vec::with_capacity(terms.len());
        let mut scalar = c(0.0);
        let mut constant: Option<NcElement> = None;
        let mut stack: Vec<SymbolExpr> = terms.into_iter().rev().collect();
        while let Some(t) = stack.pop() {
            match t.node() {
                Node::Sum(inner) => stack.extend(inner.iter().rev().cloned()),
                Node::Scalar(v) => scalar += v,
                Node::Constant(a) => {
                    constant = Some(match constant {
                        None => a.clone(),
                        Some(prev) => prev.add(a).unwrap_or_else(|_| {
                            flat.push(t.clone());
                            prev
                        }),
                    })
                }
                _ => flat.push(t),
            }
        }
        let mut leading = Vec::new();
        match constant {
            Some(a) => {
                let a = a.add(&NcElement::scalar(a.theta(), scalar)).expect("same theta");
                if !a.is_zero() {
                    leading.push(SymbolExpr::constant(a));
                }
            }
            None if scalar != c(0.0) => leading.push(SymbolExpr::scalar(scalar)),
            None => {}
        }
        leading.extend(flat);
        match leading.len() {
            0 => Self::zero(),
            1 => leading.pop().unwrap(),
            _ => Self::wrap(Node::Sum(leading)),
        }
    }

    /// Flattening ordered product; scalars and xi-monomials (both central) are pulled
    /// to the front, adjacent constants are multiplied out.
    pub fn product(factors: Vec<SymbolExpr>) -> Self {
        let mut nontrivial = factors.iter().filter(|f| !f.is_one());
        if let (Some(only), None) = (nontrivial.next(), nontrivial.next()) {
            if !matches!(only.node(), Node::Product(_)) {
                return only.clone();
            }
        }
        let mut coef = c(1.0);
        let mut alpha: Option<MultiIndex> = None;
        let mut ordered: Vec<SymbolExpr> = Vec::with_capacity(factors.len());
        let mut stack: Vec<SymbolExpr> = factors.into_iter().rev().collect();
        while let Some(f) = stack.pop() {
            if f.is_zero() {
                return Self::zero();
            }
            match f.node() {
                Node::Product(inner) => stack.extend(inner.iter().rev().cloned()),
                Node::Scalar(v) => coef *= v,
                Node::XiMonomial(b) => {
                    alpha = Some(match alpha {
                        None => b.clone(),
                        Some(a) => a.iter().zip(b).map(|(x, y)| x + y).collect(),
                    })
                }
                Node::Constant(a) => {
                    let merged = match ordered.last().map(|l| l.node()) {
                        Some(Node::Constant(prev)) => prev.mul(a).ok(),
                        _ => None,
                    };
                    match merged {
                        Some(m) => {
                            ordered.pop();
                            if m.is_zero() {
                                return Self::zero();
                            }
                            ordered.push(SymbolExpr::wrap(Node::Constant(m)));
                        }
                        None => ordered.push(f.clone()),
                    }
                }
                _ => ordered.push(f),
            }
        }
        if coef == c(0.0) {
            return Self::zero();
        }
        if coef != c(1.0) {
            if let Some(pos) = ordered.iter().position(|f| matches!(f.node(), Node::Constant(_))) {
                if let Node::Constant(a) = ordered[pos].node() {
                    ordered[pos] = SymbolExpr::wrap(Node::Constant(a.scale(coef)));
                }
                coef = c(1.0);
            }
        }
        let mut out = Vec::with_capacity(ordered.len() + 2);
        if coef != c(1.0) {
            out.push(Self::scalar(coef));
        }
        if let Some(a) = alpha {
            out.push(Self::xi(a));
        }
        out.extend(ordered.into_iter().map(|f| match f.node() {
            Node::Constant(a) => SymbolExpr::constant(a.clone()),
            _ => f,
        }));
        out.retain(|f| !f.is_one());
        match out.len() {
            0 => Self::one(),
            1 => out.pop().unwrap(),
            _ => Self::wrap(Node::Product(out)),
        }
    }

    pub fn add(&self, other: &SymbolExpr) -> Self {
        Self::sum(vec![self.clone(), other.clone()])
    }

    pub fn sub(&self, other: &SymbolExpr) -> Self {
        Self::sum(vec![self.clone(), other.neg()])
    }

    pub fn mul(&self, other: &SymbolExpr) -> Self {
        Self::product(vec![self.clone(), other.clone()])
    }

    pub fn scale(&self, v: Complex64) -> Self {
        Self::product(vec![Self::scalar(v), self.clone()])
    }

    pub fn neg(&self) -> Self {
        self.scale(c(-1.0))
    }

    pub fn inverse(&self) -> Self {
        if let Some(v) = self.as_scalar() {
            if v != c(0.0) {
                return Self::scalar(v.inv());
            }
        }
        Self::wrap(Node::Inverse(self.clone()))
    }

    /// Principal power; the subtree must be structurally scalar-valued.
    pub fn scalar_power(&self, z: Complex64) -> Result<Self> {
        if !self.is_scalar_structural() {
            return Err(Error::NotScalar);
        }
        if z == c(0.0) {
            return Ok(Self::one());
        }
        if z == c(1.0) {
            return Ok(self.clone());
        }
        if let Some(v) = self.as_scalar() {
            if v != c(0.0) {
                return Ok(Self::scalar((z * v.ln()).exp()));
            }
        }
        Ok(Self::wrap(Node::ScalarPower(self.clone(), z)))
    }

    /// True when every constant leaf is supported on {0}.
    pub fn is_scalar_structural(&self) -> bool {
        match self.node() {
            Node::Scalar(_) | Node::XiMonomial(_) | Node::Lambda | Node::BracketNorm(_) => true,
            Node::Constant(a) => a.is_scalar(),
            Node::Sum(t) | Node::Product(t) => t.iter().all(|e| e.is_scalar_structural()),
            Node::Inverse(u) | Node::ScalarPower(u, _) => u.is_scalar_structural(),
        }
    }

    pub fn depends_on_lambda(&self) -> bool {
        match self.node() {
            Node::Lambda => true,
            Node::Scalar(_) | Node::Constant(_) | Node::XiMonomial(_) | Node::BracketNorm(_) => false,
            Node::Sum(t) | Node::Product(t) => t.iter().any(|e| e.depends_on_lambda()),
            Node::Inverse(u) | Node::ScalarPower(u, _) => u.depends_on_lambda(),
        }
    }

    /// Largest sup-norm among the supports of constant leaves.
    pub fn coefficient_radius(&self) -> i64 {
        let mut seen = HashMap::new();
        self.fold_radius(&mut seen)
    }

    fn fold_radius(&self, seen: &mut HashMap<usize, i64>) -> i64 {
        if let Some(r) = seen.get(&self.id()) {
            return *r;
        }
        let r = match self.node() {
            Node::Constant(a) => a.radius(),
            Node::Sum(t) | Node::Product(t) => t.iter().map(|e| e.fold_radius(seen)).max().unwrap_or(0),
            Node::Inverse(u) | Node::ScalarPower(u, _) => u.fold_radius(seen),
            _ => 0,
        };
        seen.insert(self.id(), r);
        r
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.id()) {
                continue;
            }
            stack.extend(e.children().iter().cloned());
        }
        seen.len()
    }

    pub fn children(&self) -> Vec<SymbolExpr> {
        match self.node() {
            Node::Sum(t) | Node::Product(t) => t.clone(),
            Node::Inverse(u) | Node::ScalarPower(u, _) => vec![u.clone()],
            _ => Vec::new(),
        }
    }

    /// d/dxi_j (0-based).
    pub fn diff_xi(&self, j: usize) -> SymbolExpr {
        let mut memo = HashMap::new();
        self.diff_rec(j, &mut memo)
    }

    pub fn diff_xi_multi(&self, alpha: &[u32]) -> SymbolExpr {
        let mut e = self.clone();
        for (j, &a) in alpha.iter().enumerate() {
            for _ in 0..a {
                e = e.diff_xi(j);
                if e.is_zero() {
                    return e;
                }
            }
        }
        e
    }

    fn diff_rec(&self, j: usize, memo: &mut HashMap<usize, SymbolExpr>) -> SymbolExpr {
        if let Some(d) = memo.get(&self.id()) {
            return d.clone();
        }
        let d = match self.node() {
            Node::Scalar(_) | Node::Constant(_) | Node::Lambda => Self::zero(),
            Node::XiMonomial(alpha) => {
                if alpha.get(j).copied().unwrap_or(0) == 0 {
                    Self::zero()
                } else {
                    let mut beta = alpha.clone();
                    beta[j] -= 1;
                    Self::xi(beta).scale(c(f64::from(alpha[j])))
                }
            }
            Node::BracketNorm(n) => {
                let n = *n;
                let mut alpha: MultiIndex = smallvec::smallvec![0; n];
                alpha[j] = 1;
                Self::xi(alpha).mul(&Self::wrap(Node::ScalarPower(self.clone(), c(-1.0))))
            }
            Node::Sum(t) => Self::sum(t.iter().map(|e| e.diff_rec(j, memo)).collect()),
            Node::Product(t) => Self::leibniz(t, |e| e.diff_rec(j, memo)),
            Node::Inverse(u) => {
                let du = u.diff_rec(j, memo);
                if du.is_zero() {
                    Self::zero()
                } else {
                    Self::product(vec![Self::scalar(c(-1.0)), self.clone(), du, self.clone()])
                }
            }
            Node::ScalarPower(u, z) => {
                let du = u.diff_rec(j, memo);
                if du.is_zero() {
                    Self::zero()
                } else {
                    let lower = Self::wrap(Node::ScalarPower(u.clone(), z - 1.0));
                    Self::product(vec![Self::scalar(*z), lower, du])
                }
            }
        };
        memo.insert(self.id(), d.clone());
        d
    }

    fn leibniz(factors: &[SymbolExpr], mut d: impl FnMut(&SymbolExpr) -> SymbolExpr) -> SymbolExpr {
        let mut terms = Vec::new();
        for i in 0..factors.len() {
            let di = d(&factors[i]);
            if di.is_zero() {
                continue;
            }
            let mut f: Vec<SymbolExpr> = factors.to_vec();
            f[i] = di;
            terms.push(Self::product(f));
        }
        Self::sum(terms)
    }

    /// The derivation delta_j applied to the coefficients (xi and lambda held fixed).
    pub fn apply_delta(&self, j: usize) -> SymbolExpr {
        let mut memo = HashMap::new();
        self.delta_rec(j, &mut memo)
    }

    pub fn apply_delta_multi(&self, alpha: &[u32]) -> SymbolExpr {
        let mut e = self.clone();
        for (j, &a) in alpha.iter().enumerate() {
            for _ in 0..a {
                e = e.apply_delta(j);
                if e.is_zero() {
                    return e;
                }
            }
        }
        e
    }

    fn delta_rec(&self, j: usize, memo: &mut HashMap<usize, SymbolExpr>) -> SymbolExpr {
        if let Some(d) = memo.get(&self.id()) {
            return d.clone();
        }
        let d = match self.node() {
            Node::Constant(a) => Self::constant(a.delta(j)),
            Node::Scalar(_) | Node::XiMonomial(_) | Node::Lambda | Node::BracketNorm(_) | Node::ScalarPower(..) => {
                Self::zero()
            }
            Node::Sum(t) => Self::sum(t.iter().map(|e| e.delta_rec(j, memo)).collect()),
            Node::Product(t) => Self::leibniz(t, |e| e.delta_rec(j, memo)),
            Node::Inverse(u) => {
                let du = u.delta_rec(j, memo);
                if du.is_zero() {
                    Self::zero()
                } else {
                    Self::product(vec![Self::scalar(c(-1.0)), self.clone(), du, self.clone()])
                }
            }
        };
        memo.insert(self.id(), d.clone());
        d
    }

    /// Pointwise involution rho(xi)*. Lambda-dependent trees are rejected.
    pub fn adjoint(&self) -> Result<SymbolExpr> {
        let mut memo = HashMap::new();
        self.adjoint_rec(&mut memo)
    }

    fn adjoint_rec(&self, memo: &mut HashMap<usize, SymbolExpr>) -> Result<SymbolExpr> {
        if let Some(d) = memo.get(&self.id()) {
            return Ok(d.clone());
        }
        let d = match self.node() {
            Node::Scalar(v) => Self::scalar(v.conj()),
            Node::Constant(a) => Self::constant(a.adjoint()),
            Node::XiMonomial(_) | Node::BracketNorm(_) => self.clone(),
            Node::Lambda => {
                return Err(Error::Unsupported(
                    "adjoint of a lambda-dependent symbol".into(),
                ))
            }
            Node::Sum(t) => Self::sum(t.iter().map(|e| e.adjoint_rec(memo)).collect::<Result<_>>()?),
            Node::Product(t) => Self::product(
                t.iter()
                    .rev()
                    .map(|e| e.adjoint_rec(memo))
                    .collect::<Result<_>>()?,
            ),
            Node::Inverse(u) => u.adjoint_rec(memo)?.inverse(),
            Node::ScalarPower(u, z) => u.adjoint_rec(memo)?.scalar_power(z.conj())?,
        };
        memo.insert(self.id(), d.clone());
        Ok(d)
    }

    pub fn eval(
        &self,
        theta: &Arc<ThetaMatrix>,
        xi: &[f64],
        lambda: Option<Complex64>,
        policy: EvalPolicy,
    ) -> Result<NcElement> {
        Evaluator::new(theta, xi, lambda, policy).eval(self)
    }
}

/// Evaluates expressions at a fixed (xi, lambda), caching shared subtrees.
pub struct Evaluator<'a> {
    theta: &'a Arc<ThetaMatrix>,
    xi: &'a [f64],
    lambda: Option<Complex64>,
    policy: EvalPolicy,
    cache: HashMap<usize, NcElement>,
}

impl<'a> Evaluator<'a> {
    pub fn new(theta: &'a Arc<ThetaMatrix>, xi: &'a [f64], lambda: Option<Complex64>, policy: EvalPolicy) -> Self {
        Evaluator {
            theta,
            xi,
            lambda,
            policy,
            cache: HashMap::new(),
        }
    }

    pub fn eval(&mut self, e: &SymbolExpr) -> Result<NcElement> {
        if let Some(v) = self.cache.get(&e.id()) {
            return Ok(v.clone());
        }
        let v = self.eval_node(e)?;
        if !matches!(e.node(), Node::Scalar(_) | Node::Constant(_)) {
            self.cache.insert(e.id(), v.clone());
        }
        Ok(v)
    }

    fn scalar(&self, v: Complex64) -> NcElement {
        NcElement::scalar(self.theta, v)
    }

    fn eval_node(&mut self, e: &SymbolExpr) -> Result<NcElement> {
        match e.node() {
            Node::Scalar(v) => Ok(self.scalar(*v)),
            Node::Constant(a) => {
                if crate::algebra::same_theta(a.theta(), self.theta) {
                    Ok(a.clone())
                } else {
                    Err(Error::ThetaMismatch)
                }
            }
            Node::XiMonomial(alpha) => {
                if alpha.len() != self.xi.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.xi.len(),
                        got: alpha.len(),
                    });
                }
                let v: f64 = self
                    .xi
                    .iter()
                    .zip(alpha)
                    .map(|(x, &a)| x.powi(a as i32))
                    .product();
                Ok(self.scalar(c(v)))
            }
            Node::Lambda => self.lambda.map(|l| self.scalar(l)).ok_or(Error::UnboundLambda),
            Node::BracketNorm(_) => {
                let r2: f64 = self.xi.iter().map(|x| x * x).sum();
                Ok(self.scalar(c((1.0 + r2).sqrt())))
            }
            Node::Sum(t) => {
                let mut acc = NcElement::zero(self.theta);
                for (i, term) in t.iter().enumerate() {
                    let v = self.eval(term).map_err(|err| err.at(format!("sum[{i}]")))?;
                    acc.axpy(c(1.0), &v)?;
                }
                Ok(acc.prune(crate::algebra::DEFAULT_PRUNE))
            }
            Node::Product(t) => {
                let mut acc = NcElement::one(self.theta);
                for (i, f) in t.iter().enumerate() {
                    let v = self.eval(f).map_err(|err| err.at(format!("product[{i}]")))?;
                    acc = acc.mul(&v)?;
                }
                Ok(acc)
            }
            Node::Inverse(u) => {
                let v = self.eval(u).map_err(|err| err.at("inverse"))?;
                v.invert(self.policy.cutoff, self.policy.tol)
                    .map_err(|err| err.at("inverse"))
            }
            Node::ScalarPower(u, z) => {
                let v = self.eval(u).map_err(|err| err.at("power"))?;
                let s = v.scalar_value().ok_or_else(|| Error::NotScalar.at("power"))?;
                if s == c(0.0) {
                    if z.re > 0.0 {
                        return Ok(NcElement::zero(self.theta));
                    }
                    return Err(Error::Branch(format!("0^{z} is undefined")).at("power"));
                }
                Ok(self.scalar((z * s.ln()).exp()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum NodeRecord {
    Scalar { re: f64, im: f64 },
    Constant { coefficients: Vec<CoefficientRecord> },
    Xi { alpha: Vec<u32> },
    Lambda,
    BracketNorm { n: usize },
    Sum { children: Vec<usize> },
    Product { children: Vec<usize> },
    Inverse { child: usize },
    ScalarPower { child: usize, re: f64, im: f64 },
}

/// Flattens a forest of expressions into a node table, preserving sharing.
/// Children always precede parents.
pub fn to_node_table(roots: &[SymbolExpr]) -> (Vec<NodeRecord>, Vec<usize>) {
    fn visit(e: &SymbolExpr, ids: &mut HashMap<usize, usize>, out: &mut Vec<NodeRecord>) -> usize {
        if let Some(&i) = ids.get(&e.id()) {
            return i;
        }
        let rec = match e.node() {
            Node::Scalar(v) => NodeRecord::Scalar { re: v.re, im: v.im },
            Node::Constant(a) => NodeRecord::Constant {
                coefficients: a.to_record().coefficients,
            },
            Node::XiMonomial(alpha) => NodeRecord::Xi {
                alpha: alpha.to_vec(),
            },
            Node::Lambda => NodeRecord::Lambda,
            Node::BracketNorm(n) => NodeRecord::BracketNorm { n: *n },
            Node::Sum(t) => NodeRecord::Sum {
                children: t.iter().map(|x| visit(x, ids, out)).collect(),
            },
            Node::Product(t) => NodeRecord::Product {
                children: t.iter().map(|x| visit(x, ids, out)).collect(),
            },
            Node::Inverse(u) => NodeRecord::Inverse {
                child: visit(u, ids, out),
            },
            Node::ScalarPower(u, z) => NodeRecord::ScalarPower {
                child: visit(u, ids, out),
                re: z.re,
                im: z.im,
            },
        };
        out.push(rec);
        let i = out.len() - 1;
        ids.insert(e.id(), i);
        i
    }
    let mut ids = HashMap::new();
    let mut out = Vec::new();
    let root_ids = roots.iter().map(|r| visit(r, &mut ids, &mut out)).collect();
    (out, root_ids)
}

/// Rebuilds expressions from a node table. Nodes are rebuilt verbatim, without
/// smart-constructor rewriting, so the structure round-trips exactly.
pub fn from_node_table(theta: &Arc<ThetaMatrix>, nodes: &[NodeRecord], roots: &[usize]) -> Result<Vec<SymbolExpr>> {
    let mut built: Vec<SymbolExpr> = Vec::with_capacity(nodes.len());
    let get = |built: &Vec<SymbolExpr>, i: usize| -> Result<SymbolExpr> {
        built
            .get(i)
            .cloned()
            .ok_or_else(|| Error::Serde(format!("node reference {i} is not defined before use")))
    };
    for rec in nodes {
        let node = match rec {
            NodeRecord::Scalar { re, im } => Node::Scalar(Complex64::new(*re, *im)),
            NodeRecord::Constant { coefficients } => {
                Node::Constant(NcElement::from_record_with(theta, coefficients)?)
            }
            NodeRecord::Xi { alpha } => {
                if alpha.len() != theta.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: theta.dim(),
                        got: alpha.len(),
                    });
                }
                Node::XiMonomial(alpha.iter().copied().collect())
            }
            NodeRecord::Lambda => Node::Lambda,
            NodeRecord::BracketNorm { n } => Node::BracketNorm(*n),
            NodeRecord::Sum { children } => {
                Node::Sum(children.iter().map(|&i| get(&built, i)).collect::<Result<_>>()?)
            }
            NodeRecord::Product { children } => {
                Node::Product(children.iter().map(|&i| get(&built, i)).collect::<Result<_>>()?)
            }
            NodeRecord::Inverse { child } => Node::Inverse(get(&built, *child)?),
            NodeRecord::ScalarPower { child, re, im } => {
                let u = get(&built, *child)?;
                if !u.is_scalar_structural() {
                    return Err(Error::NotScalar);
                }
                Node::ScalarPower(u, Complex64::new(*re, *im))
            }
        };
        built.push(SymbolExpr::wrap(node));
    }
    roots.iter().map(|&r| get(&built, r)).collect()
}

/// Tree form of an expression: {"op": ..., "args": [...]}. Shared subtrees are
/// written out once per use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum NestedNode {
    Scalar { re: f64, im: f64 },
    Constant { coefficients: Vec<CoefficientRecord> },
    Xi { alpha: Vec<u32> },
    Lambda,
    BracketNorm { n: usize },
    Sum { args: Vec<NestedNode> },
    Product { args: Vec<NestedNode> },
    Inverse { args: Vec<NestedNode> },
    ScalarPower { args: Vec<NestedNode>, re: f64, im: f64 },
}

impl SymbolExpr {
    /// Number of nodes once shared subtrees are expanded, saturating at `cap`.
    pub fn tree_size(&self, cap: usize) -> usize {
        fn go(e: &SymbolExpr, memo: &mut HashMap<usize, usize>, cap: usize) -> usize {
            if let Some(&v) = memo.get(&e.id()) {
                return v;
            }
            let mut v = 1usize;
            for c in e.children() {
                v = v.saturating_add(go(&c, memo, cap)).min(cap);
            }
            memo.insert(e.id(), v);
            v
        }
        go(self, &mut HashMap::new(), cap)
    }

    pub fn to_nested(&self) -> NestedNode {
        match self.node() {
            Node::Scalar(v) => NestedNode::Scalar { re: v.re, im: v.im },
            Node::Constant(a) => NestedNode::Constant {
                coefficients: a.to_record().coefficients,
            },
            Node::XiMonomial(alpha) => NestedNode::Xi {
                alpha: alpha.to_vec(),
            },
            Node::Lambda => NestedNode::Lambda,
            Node::BracketNorm(n) => NestedNode::BracketNorm { n: *n },
            Node::Sum(t) => NestedNode::Sum {
                args: t.iter().map(|x| x.to_nested()).collect(),
            },
            Node::Product(t) => NestedNode::Product {
                args: t.iter().map(|x| x.to_nested()).collect(),
            },
            Node::Inverse(u) => NestedNode::Inverse {
                args: vec![u.to_nested()],
            },
            Node::ScalarPower(u, z) => NestedNode::ScalarPower {
                args: vec![u.to_nested()],
                re: z.re,
                im: z.im,
            },
        }
    }

    /// Rebuilds an expression verbatim from its tree form.
    pub fn from_nested(theta: &Arc<ThetaMatrix>, rec: &NestedNode) -> Result<Self> {
        let single = |args: &[NestedNode]| -> Result<SymbolExpr> {
            match args {
                [a] => SymbolExpr::from_nested(theta, a),
                _ => Err(Error::Serde(format!("expected one argument, got {}", args.len()))),
            }
        };
        let many = |args: &[NestedNode]| -> Result<Vec<SymbolExpr>> {
            args.iter().map(|a| SymbolExpr::from_nested(theta, a)).collect()
        };
        let node = match rec {
            NestedNode::Scalar { re, im } => Node::Scalar(Complex64::new(*re, *im)),
            NestedNode::Constant { coefficients } => {
                Node::Constant(NcElement::from_record_with(theta, coefficients)?)
            }
            NestedNode::Xi { alpha } => {
                if alpha.len() != theta.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: theta.dim(),
                        got: alpha.len(),
                    });
                }
                Node::XiMonomial(alpha.iter().copied().collect())
            }
            NestedNode::Lambda => Node::Lambda,
            NestedNode::BracketNorm { n } => Node::BracketNorm(*n),
            NestedNode::Sum { args } => Node::Sum(many(args)?),
            NestedNode::Product { args } => Node::Product(many(args)?),
            NestedNode::Inverse { args } => Node::Inverse(single(args)?),
            NestedNode::ScalarPower { args, re, im } => {
                let u = single(args)?;
                if !u.is_scalar_structural() {
                    return Err(Error::NotScalar);
                }
                Node::ScalarPower(u, Complex64::new(*re, *im))
            }
        };
        Ok(SymbolExpr::wrap(node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallvec::smallvec;

    fn th() -> Arc<ThetaMatrix> {
        Arc::new(ThetaMatrix::two(0.3))
    }

    #[test]
    fn smart_constructors_fold() {
        let x = SymbolExpr::xi_j(2, 0);
        assert!(SymbolExpr::sum(vec![SymbolExpr::zero(), SymbolExpr::zero()]).is_zero());
        assert!(SymbolExpr::product(vec![x.clone(), SymbolExpr::zero()]).is_zero());
        let p = SymbolExpr::product(vec![SymbolExpr::one(), x.clone()]);
        assert!(p.ptr_eq(&x));
        let xx = x.mul(&x);
        assert!(matches!(xx.node(), Node::XiMonomial(a) if a.as_slice() == [2, 0]));
    }

    #[test]
    fn derivative_of_inverse_shares_node() {
        let n2 = SymbolExpr::xi_norm_sq(2).add(&SymbolExpr::one());
        let inv = n2.inverse();
        let d = inv.diff_xi(0);
        match d.node() {
            Node::Product(f) => {
                let shared = f.iter().filter(|x| x.ptr_eq(&inv)).count();
                assert_eq!(shared, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        let t = th();
        let xi = [0.7, -1.3];
        let v = d.eval(&t, &xi, None, EvalPolicy::default()).unwrap().trace();
        let r2 = 1.0 + 0.49 + 1.69;
        assert!((v.re + 2.0 * 0.7 / (r2 * r2)).abs() < 1e-14);
    }

    #[test]
    fn bracket_derivative() {
        let b = SymbolExpr::bracket(2);
        let d = b.diff_xi(1);
        let t = th();
        let xi = [0.5, 2.0];
        let v = d.eval(&t, &xi, None, EvalPolicy::default()).unwrap().trace();
        assert!((v.re - 2.0 / (1.0f64 + 0.25 + 4.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn scalar_power_rejects_nonscalar() {
        let t = th();
        let u1 = SymbolExpr::constant(NcElement::generator(&t, 0));
        assert!(matches!(u1.scalar_power(c(0.5)), Err(Error::NotScalar)));
    }

    #[test]
    fn eval_error_carries_path() {
        let t = th();
        let one = NcElement::one(&t);
        let a = one.add(&NcElement::generator(&t, 0)).unwrap();
        let e = SymbolExpr::xi_j(2, 0).mul(&SymbolExpr::constant(a).inverse());
        match e.eval(&t, &[1.0, 0.0], None, EvalPolicy::default()) {
            Err(Error::Eval { path, .. }) => assert_eq!(path, "product[1]/inverse"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn delta_of_constant() {
        let t = th();
        let a = NcElement::monomial(&t, smallvec![2, -1], c(1.0));
        let e = SymbolExpr::constant(a).mul(&SymbolExpr::xi_j(2, 1));
        let d = e.apply_delta(0);
        let v = d.eval(&t, &[0.0, 3.0], None, EvalPolicy::default()).unwrap();
        assert!((v.coeff(&[2, -1]) - 6.0).norm() < 1e-14);
    }

    #[test]
    fn node_table_roundtrip() {
        let t = th();
        let a = NcElement::generator(&t, 1).scale(c(0.3));
        let inner = SymbolExpr::xi_norm_sq(2).add(&SymbolExpr::constant(a)).sub(&SymbolExpr::lambda());
        let inv = inner.inverse();
        let e = inv.mul(&SymbolExpr::xi_j(2, 0)).mul(&inv);
        let (nodes, roots) = to_node_table(&[e.clone()]);
        let json = serde_json::to_string(&nodes).unwrap();
        let back: Vec<NodeRecord> = serde_json::from_str(&json).unwrap();
        let rebuilt = from_node_table(&t, &back, &roots).unwrap().pop().unwrap();
        assert_eq!(rebuilt.node_count(), e.node_count());
        let pol = EvalPolicy::default();
        let l = Some(Complex64::new(-2.0, 1.0));
        let x = [0.4, 1.1];
        let d = e.eval(&t, &x, l, pol).unwrap().sub(&rebuilt.eval(&t, &x, l, pol).unwrap()).unwrap();
        assert!(d.l2_norm() < 1e-15);
    }
}
