//! Symbolic composition, adjoints, parametrices and ellipticity data.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{same_theta, NcElement, ThetaMatrix};
use crate::error::{Error, Result};
use crate::geometry::{sectors_avoiding, sphere_grid, PseudoCone, CLUSTER_GAP};
use crate::lattice::{self, LatticeBox, MultiIndex};
use crate::linalg;
use crate::symbol::{ClassicalSymbol, Cutoff, EvalPolicy, HomogeneousSymbol, SymbolExpr};

/// Memoized derivatives of the components of one symbol.
struct Derivatives<'a> {
    symbol: &'a ClassicalSymbol,
    xi: HashMap<(usize, MultiIndex), SymbolExpr>,
    delta: HashMap<(usize, MultiIndex), SymbolExpr>,
}

impl<'a> Derivatives<'a> {
    fn new(symbol: &'a ClassicalSymbol) -> Self {
        Derivatives {
            symbol,
            xi: HashMap::new(),
            delta: HashMap::new(),
        }
    }

    fn d_xi(&mut self, j: usize, alpha: &MultiIndex) -> SymbolExpr {
        let s = self.symbol;
        self.xi
            .entry((j, alpha.clone()))
            .or_insert_with(|| s.component_expr(j).diff_xi_multi(alpha))
            .clone()
    }

    fn d_delta(&mut self, j: usize, alpha: &MultiIndex) -> SymbolExpr {
        let s = self.symbol;
        self.delta
            .entry((j, alpha.clone()))
            .or_insert_with(|| s.component_expr(j).apply_delta_multi(alpha))
            .clone()
    }
}

fn check_pair(a: &ClassicalSymbol, b: &ClassicalSymbol) -> Result<Option<f64>> {
    if !same_theta(a.theta(), b.theta()) {
        return Err(Error::ThetaMismatch);
    }
    match (a.weight(), b.weight()) {
        (Some(x), Some(y)) if (x - y).abs() > 1e-12 => Err(Error::Precondition(format!(
            "parametric weights differ ({x} vs {y})"
        ))),
        (Some(x), _) | (_, Some(x)) => Ok(Some(x)),
        _ => Ok(None),
    }
}

/// Composition rho1 # rho2 with components j = 0..=depth:
/// (rho1 # rho2)_{q1+q2-j} = sum_{k+l+|alpha|=j} (1/alpha!) d_xi^alpha rho1_{q1-k} delta^alpha rho2_{q2-l}.
pub fn sharp(r1: &ClassicalSymbol, r2: &ClassicalSymbol, depth: usize) -> Result<ClassicalSymbol> {
    let weight = check_pair(r1, r2)?;
    let n = r1.theta().dim();
    let mut d1 = Derivatives::new(r1);
    let mut d2 = Derivatives::new(r2);
    let mut components = Vec::with_capacity(depth + 1);
    for j in 0..=depth {
        let mut terms = Vec::new();
        for k in 0..=j.min(r1.depth().saturating_sub(1)) {
            for l in 0..=(j - k).min(r2.depth().saturating_sub(1)) {
                let s = (j - k - l) as u32;
                for alpha in lattice::multi_indices(n, s) {
                    let a = d1.d_xi(k, &alpha);
                    if a.is_zero() {
                        continue;
                    }
                    let b = d2.d_delta(l, &alpha);
                    if b.is_zero() {
                        continue;
                    }
                    let coef = 1.0 / lattice::factorial(&alpha);
                    terms.push(SymbolExpr::product(vec![
                        SymbolExpr::scalar(Complex64::new(coef, 0.0)),
                        a,
                        b,
                    ]));
                }
            }
        }
        components.push(SymbolExpr::sum(terms));
    }
    Ok(ClassicalSymbol::new(r1.theta(), r1.order() + r2.order(), components)
        .with_weight(weight)
        .with_cutoff(r1.cutoff().join(&r2.cutoff()))
        .with_policy(r1.policy()))
}

/// Adjoint symbol with components j = 0..=depth:
/// rho*_{q-j} = sum_{k+|alpha|=j} (1/alpha!) delta^alpha d_xi^alpha [rho_{q-k}(xi)*].
pub fn star(r: &ClassicalSymbol, depth: usize) -> Result<ClassicalSymbol> {
    if r.depends_on_lambda() {
        return Err(Error::Unsupported(
            "adjoint of a lambda-dependent symbol".into(),
        ));
    }
    let n = r.theta().dim();
    let pointwise: Vec<SymbolExpr> = r
        .components()
        .iter()
        .map(|c| c.adjoint())
        .collect::<Result<_>>()?;
    let mut components = Vec::with_capacity(depth + 1);
    for j in 0..=depth {
        let mut terms = Vec::new();
        for k in 0..=j.min(pointwise.len().saturating_sub(1)) {
            let s = (j - k) as u32;
            for alpha in lattice::multi_indices(n, s) {
                let t = pointwise[k].diff_xi_multi(&alpha).apply_delta_multi(&alpha);
                if t.is_zero() {
                    continue;
                }
                let coef = 1.0 / lattice::factorial(&alpha);
                terms.push(t.scale(Complex64::new(coef, 0.0)));
            }
        }
        components.push(SymbolExpr::sum(terms));
    }
    Ok(ClassicalSymbol::new(r.theta(), r.order(), components)
        .with_cutoff(r.cutoff())
        .with_policy(r.policy()))
}

/// Default excision for parametrices: identity away from |xi| < 1, zero at the origin.
pub const PARAMETRIX_CUTOFF: Cutoff = Cutoff::Smooth {
    radius: 0.5,
    width: 0.5,
};

fn recursion(
    r: &ClassicalSymbol,
    inv0: SymbolExpr,
    depth: usize,
) -> Vec<SymbolExpr> {
    let n = r.theta().dim();
    let mut dr = Derivatives::new(r);
    let mut sigma: Vec<SymbolExpr> = vec![inv0.clone()];
    let mut delta_sigma: HashMap<(usize, MultiIndex), SymbolExpr> = HashMap::new();
    for j in 1..=depth {
        let mut terms = Vec::new();
        for k in 0..=j.min(r.depth().saturating_sub(1)) {
            for l in 0..(j - k + 1).min(j) {
                if k + l > j {
                    continue;
                }
                let s = (j - k - l) as u32;
                for alpha in lattice::multi_indices(n, s) {
                    let a = dr.d_xi(k, &alpha);
                    if a.is_zero() {
                        continue;
                    }
                    let b = delta_sigma
                        .entry((l, alpha.clone()))
                        .or_insert_with(|| sigma[l].apply_delta_multi(&alpha))
                        .clone();
                    if b.is_zero() {
                        continue;
                    }
                    let coef = -1.0 / lattice::factorial(&alpha);
                    terms.push(SymbolExpr::product(vec![
                        SymbolExpr::scalar(Complex64::new(coef, 0.0)),
                        inv0.clone(),
                        a,
                        b,
                    ]));
                }
            }
        }
        sigma.push(SymbolExpr::sum(terms));
    }
    sigma
}

/// Parametrix symbol with components j = 0..=depth:
/// sigma_{-q} = rho_q^{-1},
/// sigma_{-q-j} = -sum_{k+l+|alpha|=j, l<j} (1/alpha!) rho_q^{-1} d_xi^alpha rho_{q-k} delta^alpha sigma_{-q-l}.
pub fn parametrix(r: &ClassicalSymbol, depth: usize) -> Result<ClassicalSymbol> {
    if r.depends_on_lambda() {
        return Err(Error::Unsupported(
            "parametrix of a lambda-dependent symbol; use parametric_parametrix".into(),
        ));
    }
    let principal = r.component_expr(0);
    if principal.is_zero() {
        return Err(Error::NotElliptic { xi: Vec::new() });
    }
    let sigma = recursion(r, principal.inverse(), depth);
    Ok(ClassicalSymbol::new(r.theta(), -r.order(), sigma)
        .with_cutoff(PARAMETRIX_CUTOFF)
        .with_policy(r.policy()))
}

/// Parametrix of rho - lambda: the recursion above with rho_w replaced by rho_w - lambda.
/// The result is parametric of weight w, with no excision.
pub fn parametric_parametrix(r: &ClassicalSymbol, depth: usize) -> Result<ClassicalSymbol> {
    if r.depends_on_lambda() {
        return Err(Error::Unsupported(
            "the operator symbol must not depend on lambda".into(),
        ));
    }
    let shifted = r.component_expr(0).sub(&SymbolExpr::lambda());
    let sigma = recursion(r, shifted.inverse(), depth);
    Ok(ClassicalSymbol::new(r.theta(), -r.order(), sigma)
        .with_weight(Some(r.order()))
        .with_policy(r.policy()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityConfig {
    pub samples: usize,
    /// Box cutoff for the left-multiplication matrices.
    pub cutoff: usize,
    pub cluster_gap: f64,
    /// Relative widening of each spectral cluster.
    pub expand: f64,
}

impl Default for EllipticityConfig {
    fn default() -> Self {
        EllipticityConfig {
            samples: 64,
            cutoff: 8,
            cluster_gap: CLUSTER_GAP,
            expand: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EllipticityData {
    /// Order of the principal symbol.
    pub weight: f64,
    /// min over the unit sphere of the smallest singular value of rho_w(xi).
    pub c: f64,
    /// max over the unit sphere of ||rho_w(xi)||.
    pub c_prime: f64,
    pub sphere_samples: Vec<Vec<f64>>,
    pub spectral_cloud: Vec<Vec<Complex64>>,
    /// The open cone of directions avoiding the principal spectra.
    pub theta_p: PseudoCone,
}

impl EllipticityData {
    pub fn cloud(&self) -> impl Iterator<Item = &Complex64> {
        self.spectral_cloud.iter().flatten()
    }

    /// True when every sampled principal eigenvalue lies in (0, inf) up to tol.
    pub fn positive(&self, tol: f64) -> bool {
        self.cloud().all(|z| z.re > tol && z.im.abs() <= tol * z.re.max(1.0))
    }
}

fn left_mult_reduced(a: &NcElement, cutoff: usize) -> linalg::CMatrix {
    let n = a.dim();
    let active: Vec<bool> = (0..n).map(|j| a.support().any(|k| k[j] != 0)).collect();
    a.left_mult_matrix(&LatticeBox::restricted(n, cutoff, &active))
}

/// Sampled ellipticity constants, principal spectra and Theta(P).
pub fn ellipticity_data(
    theta: &Arc<ThetaMatrix>,
    principal: &HomogeneousSymbol,
    config: &EllipticityConfig,
) -> Result<EllipticityData> {
    if principal.expr.depends_on_lambda() {
        return Err(Error::Unsupported("ellipticity of a parametric symbol".into()));
    }
    let n = theta.dim();
    let samples = sphere_grid(n, config.samples);
    let policy = EvalPolicy {
        cutoff: config.cutoff,
        ..EvalPolicy::default()
    };
    let mut c = f64::INFINITY;
    let mut c_prime: f64 = 0.0;
    let mut worst = Vec::new();
    let mut cloud = Vec::with_capacity(samples.len());
    for xi in &samples {
        let v = principal
            .expr
            .eval(theta, xi, None, policy)
            .map_err(|e| e.at("principal"))?;
        let m = left_mult_reduced(&v, config.cutoff);
        let s = linalg::singular_values(&m);
        let smax = s.first().copied().unwrap_or(0.0);
        let smin = s.last().copied().unwrap_or(0.0);
        if smin < c {
            c = smin;
            worst = xi.clone();
        }
        c_prime = c_prime.max(smax);
        cloud.push(linalg::eigenvalues(&m)?);
    }
    if !(c > 1e-12 * c_prime) {
        return Err(Error::NotElliptic { xi: worst });
    }
    let flat: Vec<Complex64> = cloud.iter().flatten().copied().collect();
    let sectors = sectors_avoiding(&flat, config.cluster_gap, config.expand);
    let mut theta_p = PseudoCone::sectors(sectors)?;
    theta_p.closed = false;
    Ok(EllipticityData {
        weight: principal.degree,
        c,
        c_prime,
        sphere_samples: samples,
        spectral_cloud: cloud,
        theta_p,
    })
}
