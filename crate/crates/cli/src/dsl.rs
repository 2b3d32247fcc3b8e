//! Operator expressions over U1..Un, d1..dn and complex literals.
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { "*" unary } ;
//! unary    = ("+" | "-") unary | power ;
//! power    = atom [ "^" exponent ] ;
//! exponent = [ "+" | "-" ] integer | "(" [ "+" | "-" ] integer ")" ;
//! atom     = number | "i" | "U" index | "d" index | "(" expr ")" ;
//! number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] [ "i" ] ;
//! index    = digits ;
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use smallvec::SmallVec;

use nctorus::lattice::{self, MultiIndex};
use nctorus::symbol::ClassicalSymbol;
use nctorus::{Error, NcElement, Result, ThetaMatrix};

#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Num(Complex64),
    /// U_j, 0-based.
    U(usize),
    /// delta_j, 0-based.
    D(usize),
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, i64),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Complex64),
    U(usize),
    D(usize),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn perr(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

fn lex(src: &str, n: usize) -> Result<Vec<(usize, Tok)>> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((start, Tok::Plus)),
            b'-' => out.push((start, Tok::Minus)),
            b'*' => out.push((start, Tok::Star)),
            b'^' => out.push((start, Tok::Caret)),
            b'(' => out.push((start, Tok::LParen)),
            b')' => out.push((start, Tok::RParen)),
            b'i' => out.push((start, Tok::Num(Complex64::new(0.0, 1.0)))),
            b'U' | b'd' => {
                let mut j = i + 1;
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
                if j == i + 1 {
                    return Err(perr(start, format!("'{}' must be followed by an index", c as char)));
                }
                let idx: usize = src[i + 1..j]
                    .parse()
                    .map_err(|_| perr(start, "index out of range"))?;
                if idx == 0 || idx > n {
                    return Err(perr(start, format!("index {idx} is outside 1..={n}")));
                }
                out.push((start, if c == b'U' { Tok::U(idx - 1) } else { Tok::D(idx - 1) }));
                i = j;
                continue;
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
                if j < b.len() && b[j] == b'.' {
                    j += 1;
                    while j < b.len() && b[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < b.len() && (b[j] == b'e' || b[j] == b'E') {
                    let mut k = j + 1;
                    if k < b.len() && (b[k] == b'+' || b[k] == b'-') {
                        k += 1;
                    }
                    if k < b.len() && b[k].is_ascii_digit() {
                        while k < b.len() && b[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let v: f64 = src[i..j]
                    .parse()
                    .map_err(|_| perr(start, format!("malformed number '{}'", &src[i..j])))?;
                if j < b.len() && b[j] == b'i' {
                    out.push((start, Tok::Num(Complex64::new(0.0, v))));
                    j += 1;
                } else {
                    out.push((start, Tok::Num(Complex64::new(v, 0.0))));
                }
                i = j;
                continue;
            }
            _ => return Err(perr(start, format!("unexpected character '{}'", src[i..].chars().next().unwrap_or('?')))),
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Star) = self.peek() {
            self.bump();
            lhs = Ast::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Ast> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.bump();
                Ok(Ast::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Plus) => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            let at = self.here();
            let e = self.exponent()?;
            if e < 0 && contains_delta(&base) {
                return Err(perr(at, "the exponent of a derivation must be a nonnegative integer"));
            }
            return Ok(Ast::Pow(Box::new(base), e));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i64> {
        let paren = matches!(self.peek(), Some(Tok::LParen));
        if paren {
            self.bump();
        }
        let mut sign = 1;
        match self.peek() {
            Some(Tok::Minus) => {
                self.bump();
                sign = -1;
            }
            Some(Tok::Plus) => {
                self.bump();
            }
            _ => {}
        }
        let at = self.here();
        let v = match self.bump() {
            Some(Tok::Num(c)) if c.im == 0.0 && c.re.fract() == 0.0 && c.re.abs() < 1e6 => c.re as i64 * sign,
            _ => return Err(perr(at, "exponent must be an integer")),
        };
        if paren {
            let at = self.here();
            if self.bump() != Some(Tok::RParen) {
                return Err(perr(at, "expected ')'"));
            }
        }
        Ok(v)
    }

    fn atom(&mut self) -> Result<Ast> {
        let at = self.here();
        match self.bump() {
            Some(Tok::Num(c)) => Ok(Ast::Num(c)),
            Some(Tok::U(j)) => Ok(Ast::U(j)),
            Some(Tok::D(j)) => Ok(Ast::D(j)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                let at = self.here();
                if self.bump() != Some(Tok::RParen) {
                    return Err(perr(at, "expected ')'"));
                }
                Ok(e)
            }
            Some(t) => Err(perr(at, format!("unexpected token {t:?}"))),
            None => Err(perr(at, "unexpected end of input")),
        }
    }
}

fn contains_delta(a: &Ast) -> bool {
    match a {
        Ast::D(_) => true,
        Ast::Num(_) | Ast::U(_) => false,
        Ast::Neg(x) | Ast::Pow(x, _) => contains_delta(x),
        Ast::Add(x, y) | Ast::Sub(x, y) | Ast::Mul(x, y) => contains_delta(x) || contains_delta(y),
    }
}

/// Parses an expression over n generators.
pub fn parse(src: &str, n: usize) -> Result<Ast> {
    let toks = lex(src, n)?;
    if toks.is_empty() {
        return Err(perr(0, "empty expression"));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(perr(p.here(), "unexpected trailing input"));
    }
    Ok(e)
}

/// A differential operator sum_alpha a_alpha delta^alpha with coefficients on the left.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffOp {
    theta: Arc<ThetaMatrix>,
    terms: BTreeMap<MultiIndex, NcElement>,
}

fn unit(n: usize, j: usize) -> MultiIndex {
    let mut a: MultiIndex = SmallVec::from_elem(0, n);
    a[j] = 1;
    a
}

impl DiffOp {
    pub fn zero(theta: &Arc<ThetaMatrix>) -> Self {
        DiffOp {
            theta: theta.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn multiplication(a: NcElement) -> Self {
        let n = a.dim();
        let mut d = DiffOp::zero(a.theta());
        d.insert(SmallVec::from_elem(0, n), a);
        d
    }

    pub fn derivation(theta: &Arc<ThetaMatrix>, j: usize) -> Self {
        let mut d = DiffOp::zero(theta);
        d.insert(unit(theta.dim(), j), NcElement::one(theta));
        d
    }

    pub fn theta(&self) -> &Arc<ThetaMatrix> {
        &self.theta
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, NcElement> {
        &self.terms
    }

    fn insert(&mut self, alpha: MultiIndex, a: NcElement) {
        let merged = match self.terms.remove(&alpha) {
            Some(b) => b.add(&a).expect("operators share theta"),
            None => a,
        };
        let merged = merged.prune(0.0);
        if !merged.is_zero() {
            self.terms.insert(alpha, merged);
        }
    }

    /// Highest |alpha| present (0 for the zero operator).
    pub fn order(&self) -> u32 {
        self.terms.keys().map(|a| lattice::order(a)).max().unwrap_or(0)
    }

    pub fn add(&self, other: &DiffOp) -> DiffOp {
        let mut out = self.clone();
        for (a, c) in &other.terms {
            out.insert(a.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> DiffOp {
        let mut out = DiffOp::zero(&self.theta);
        for (a, x) in &self.terms {
            out.insert(a.clone(), x.scale(c));
        }
        out
    }

    /// Composition, reordered by the Leibniz rule
    /// delta^alpha (b u) = sum_{gamma <= alpha} C(alpha, gamma) delta^gamma(b) delta^{alpha - gamma}(u).
    pub fn compose(&self, other: &DiffOp) -> Result<DiffOp> {
        let mut out = DiffOp::zero(&self.theta);
        for (alpha, a) in &self.terms {
            for (beta, b) in &other.terms {
                for gamma in lattice::below(alpha) {
                    let coef = lattice::binomial_multi(alpha, &gamma);
                    let db = b.delta_multi(&gamma);
                    if db.is_zero() {
                        continue;
                    }
                    let c = a.mul(&db)?.scale(Complex64::new(coef, 0.0));
                    let idx: MultiIndex = alpha
                        .iter()
                        .zip(&gamma)
                        .zip(beta)
                        .map(|((a, g), b)| a - g + b)
                        .collect();
                    out.insert(idx, c);
                }
            }
        }
        Ok(out)
    }

    /// P(u) = sum_alpha a_alpha delta^alpha(u).
    pub fn apply(&self, u: &NcElement) -> Result<NcElement> {
        let mut acc = NcElement::zero(&self.theta);
        for (alpha, a) in &self.terms {
            acc = acc.add(&a.mul(&u.delta_multi(alpha))?)?;
        }
        Ok(acc)
    }

    /// Symbol sum_alpha a_alpha xi^alpha, grouped by homogeneous degree.
    pub fn symbol(&self) -> Result<ClassicalSymbol> {
        if self.terms.is_empty() {
            return Ok(ClassicalSymbol::new(&self.theta, 0.0, vec![]));
        }
        ClassicalSymbol::differential(&self.theta, &self.terms)
    }

    pub fn max_distance(&self, other: &DiffOp) -> f64 {
        let keys: std::collections::BTreeSet<&MultiIndex> = self.terms.keys().chain(other.terms.keys()).collect();
        keys.into_iter()
            .map(|k| {
                let z = NcElement::zero(&self.theta);
                let a = self.terms.get(k).unwrap_or(&z);
                let b = other.terms.get(k).unwrap_or(&z);
                a.sub(b).map(|d| d.max_abs()).unwrap_or(f64::INFINITY)
            })
            .fold(0.0, f64::max)
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_coef(c: Complex64) -> String {
    if c.im == 0.0 {
        fmt_f64(c.re)
    } else if c.re == 0.0 {
        format!("{}i", fmt_f64(c.im))
    } else {
        let sign = if c.im.is_sign_negative() { '-' } else { '+' };
        format!("({}{}{}i)", fmt_f64(c.re), sign, fmt_f64(c.im.abs()))
    }
}

impl std::fmt::Display for DiffOp {
    /// Normalized form: one term per (alpha, k), coefficients first, derivations last.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut keys: Vec<&MultiIndex> = self.terms.keys().collect();
        keys.sort_by(|a, b| lattice::order(b).cmp(&lattice::order(a)).then(b.cmp(a)));
        let mut out = String::new();
        for alpha in keys {
            for (k, c) in self.terms[alpha].iter() {
                let mut factors: Vec<String> = Vec::new();
                for (j, &kj) in k.iter().enumerate() {
                    match kj {
                        0 => {}
                        1 => factors.push(format!("U{}", j + 1)),
                        _ => factors.push(format!("U{}^{}", j + 1, kj)),
                    }
                }
                for (j, &aj) in alpha.iter().enumerate() {
                    match aj {
                        0 => {}
                        1 => factors.push(format!("d{}", j + 1)),
                        _ => factors.push(format!("d{}^{}", j + 1, aj)),
                    }
                }
                let (neg, mag) = if c.im == 0.0 && c.re < 0.0 { (true, -*c) } else { (false, *c) };
                let coef = fmt_coef(mag);
                let body = if factors.is_empty() {
                    coef
                } else if mag == Complex64::new(1.0, 0.0) {
                    factors.join("*")
                } else {
                    format!("{}*{}", coef, factors.join("*"))
                };
                if out.is_empty() {
                    if neg {
                        out.push('-');
                    }
                } else {
                    out.push_str(if neg { " - " } else { " + " });
                }
                let _ = write!(out, "{body}");
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        f.write_str(&out)
    }
}

/// Normalizes an expression through the algebra's own product and derivations.
pub fn normalize(ast: &Ast, theta: &Arc<ThetaMatrix>) -> Result<DiffOp> {
    Ok(match ast {
        Ast::Num(c) => DiffOp::multiplication(NcElement::scalar(theta, *c)),
        Ast::U(j) => DiffOp::multiplication(NcElement::generator(theta, *j)),
        Ast::D(j) => DiffOp::derivation(theta, *j),
        Ast::Neg(x) => normalize(x, theta)?.scale(Complex64::new(-1.0, 0.0)),
        Ast::Add(x, y) => normalize(x, theta)?.add(&normalize(y, theta)?),
        Ast::Sub(x, y) => normalize(x, theta)?.add(&normalize(y, theta)?.scale(Complex64::new(-1.0, 0.0))),
        Ast::Mul(x, y) => normalize(x, theta)?.compose(&normalize(y, theta)?)?,
        Ast::Pow(x, e) => {
            let base = normalize(x, theta)?;
            let base = if *e < 0 { invert_monomial(&base)? } else { base };
            let mut acc = DiffOp::multiplication(NcElement::one(theta));
            for _ in 0..e.unsigned_abs() {
                acc = acc.compose(&base)?;
            }
            acc
        }
    })
}

// Negative powers are limited to multiplication by c U^k, whose inverse is exact.
fn invert_monomial(op: &DiffOp) -> Result<DiffOp> {
    let n = op.theta.dim();
    let zero: MultiIndex = SmallVec::from_elem(0, n);
    let a = match (op.terms.len(), op.terms.get(&zero)) {
        (1, Some(a)) if a.len() == 1 => a,
        _ => {
            return Err(Error::Unsupported(
                "negative exponents apply only to monomials c*U^k".into(),
            ))
        }
    };
    let (k, c) = a.iter().next().map(|(k, c)| (k.clone(), *c)).expect("one coefficient");
    if c.norm() == 0.0 {
        return Err(Error::NotInvertible { condition: f64::INFINITY });
    }
    // (c U^k)^{-1} = c^{-1} (U^k)^*
    let inv = NcElement::monomial(&op.theta, k, Complex64::new(1.0, 0.0))
        .adjoint()
        .scale(c.inv());
    Ok(DiffOp::multiplication(inv))
}

pub fn parse_operator(src: &str, theta: &Arc<ThetaMatrix>) -> Result<DiffOp> {
    normalize(&parse(src, theta.dim())?, theta)
}

/// Applies the raw syntax tree to u, operator by operator.
pub fn apply_ast(ast: &Ast, theta: &Arc<ThetaMatrix>, u: &NcElement) -> Result<NcElement> {
    Ok(match ast {
        Ast::Num(c) => u.scale(*c),
        Ast::U(j) => NcElement::generator(theta, *j).mul(u)?,
        Ast::D(j) => u.delta(*j),
        Ast::Neg(x) => apply_ast(x, theta, u)?.scale(Complex64::new(-1.0, 0.0)),
        Ast::Add(x, y) => apply_ast(x, theta, u)?.add(&apply_ast(y, theta, u)?)?,
        Ast::Sub(x, y) => apply_ast(x, theta, u)?.sub(&apply_ast(y, theta, u)?)?,
        Ast::Mul(x, y) => apply_ast(x, theta, &apply_ast(y, theta, u)?)?,
        Ast::Pow(x, e) if *e >= 0 => {
            let mut v = u.clone();
            for _ in 0..*e {
                v = apply_ast(x, theta, &v)?;
            }
            v
        }
        Ast::Pow(x, e) => {
            let inv = invert_monomial(&normalize(x, theta)?)?;
            let mut v = u.clone();
            for _ in 0..e.unsigned_abs() {
                v = inv.apply(&v)?;
            }
            v
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallvec::smallvec;

    fn th() -> Arc<ThetaMatrix> {
        Arc::new(ThetaMatrix::two(0.3))
    }

    #[test]
    fn laplacian() {
        let t = th();
        let p = parse_operator("d1^2 + d2^2", &t).unwrap();
        assert_eq!(p.terms().len(), 2);
        let a: MultiIndex = smallvec![2, 0];
        assert_eq!(p.terms()[&a], NcElement::one(&t));
        assert_eq!(p.to_string(), "d1^2 + d2^2");
    }

    #[test]
    fn leibniz_reordering() {
        let t = th();
        let p = parse_operator("d1*U1", &t).unwrap();
        assert_eq!(p.to_string(), "U1*d1 + U1");
        let q = parse_operator("U1*d1 + U1", &t).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn multiplication_operator() {
        let t = th();
        let p = parse_operator("U1 + U1^-1", &t).unwrap();
        assert_eq!(p.order(), 0);
        let zero: MultiIndex = smallvec![0, 0];
        let a = &p.terms()[&zero];
        assert!(a.sub(&a.adjoint()).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn literals_and_errors() {
        let t = th();
        let p = parse_operator("(2 - 0.5i)*U2^-1*d2 + 3e-1*i", &t).unwrap();
        let back = parse_operator(&p.to_string(), &t).unwrap();
        assert!(p.max_distance(&back) == 0.0);
        assert!(matches!(parse_operator("d1^-1", &t), Err(Error::Parse { .. })));
        assert!(matches!(parse_operator("d1 + ", &t), Err(Error::Parse { position: 5, .. })));
        assert!(matches!(parse_operator("U3", &t), Err(Error::Parse { position: 0, .. })));
        assert!(matches!(parse_operator("d1 $ 2", &t), Err(Error::Parse { position: 3, .. })));
        assert!(matches!(parse_operator("U1^1.5", &t), Err(Error::Parse { .. })));
    }

    #[test]
    fn ast_and_normal_form_agree() {
        let t = th();
        let src = "(d1 + U2)*(U1^2*d2 - 2)*d1 + U1^-1*d2^2*U2";
        let ast = parse(src, 2).unwrap();
        let op = normalize(&ast, &t).unwrap();
        for k in [[0i64, 0], [1, -2], [3, 1]] {
            let u = NcElement::monomial(&t, k.iter().copied().collect(), Complex64::new(1.0, 0.0));
            let a = apply_ast(&ast, &t, &u).unwrap();
            let b = op.apply(&u).unwrap();
            assert!(a.sub(&b).unwrap().max_abs() < 1e-12);
        }
    }
}
