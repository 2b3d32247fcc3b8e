//! Complex powers by spectral calculus, keyhole contour integrals and symbol integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{NcElement, ThetaMatrix};
use crate::calculus::{ellipticity_data, parametric_parametrix, EllipticityConfig, EllipticityData, PARAMETRIX_CUTOFF};
use crate::error::{Error, Result};
use crate::geometry::{contour_quadrature, Contour, QuadratureSpec};
use crate::lattice::{self, LatticeBox};
use crate::linalg::{self, CMatrix};
use crate::quant::TruncatedOperator;
use crate::symbol::{ClassicalSymbol, ClassicalSymbolRecord, Cutoff, LatticeSymbol, SymbolExpr};

/// Eigenvalues with |mu| <= KERNEL_TOL ||T|| form the kernel cluster, where 0^z := 0.
pub const KERNEL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Spectral,
    Contour,
    Symbol,
}

/// Unitary diagonalization of a normal truncation, reused across exponents.
#[derive(Clone, Debug)]
pub struct SpectralCalculus {
    q: CMatrix,
    eigenvalues: Vec<Complex64>,
    kernel_tol: f64,
}

impl SpectralCalculus {
    /// Fails with NotNormal for non-normal T and with Branch when a nonzero
    /// eigenvalue lies on (-inf, 0).
    pub fn new(m: &CMatrix, kernel_tol_rel: f64) -> Result<Self> {
        let (q, eigenvalues) = linalg::normal_decomposition(m)?;
        let scale = eigenvalues.iter().map(|m| m.norm()).fold(0.0, f64::max);
        let kernel_tol = kernel_tol_rel * scale;
        for mu in &eigenvalues {
            if mu.norm() > kernel_tol && mu.re < 0.0 && mu.im.abs() <= 1e-12 * mu.norm() {
                return Err(Error::Branch(format!(
                    "eigenvalue {mu} lies on the cut (-inf, 0)"
                )));
            }
        }
        Ok(SpectralCalculus {
            q,
            eigenvalues,
            kernel_tol,
        })
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn kernel_dim(&self) -> usize {
        self.eigenvalues.iter().filter(|m| m.norm() <= self.kernel_tol).count()
    }

    fn pow(&self, mu: Complex64, z: Complex64) -> Complex64 {
        if mu.norm() <= self.kernel_tol {
            Complex64::new(0.0, 0.0)
        } else {
            linalg::principal_pow(mu, z)
        }
    }

    pub fn power(&self, z: Complex64) -> CMatrix {
        linalg::apply_diagonal(&self.q, &self.eigenvalues, |mu| self.pow(mu, z))
    }

    /// Orthogonal projector onto the complement of the kernel cluster.
    pub fn range_projector(&self) -> CMatrix {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        linalg::apply_diagonal(&self.q, &self.eigenvalues, |mu| if mu.norm() <= self.kernel_tol { zero } else { one })
    }
}

/// T^z by eigenvector functional calculus with the principal branch and 0^z := 0.
pub fn power_spectral(t: &TruncatedOperator, z: Complex64) -> Result<TruncatedOperator> {
    let m = SpectralCalculus::new(t.matrix(), KERNEL_TOL)?.power(z);
    Ok(t.with_matrix(m, format!("spectral power z = {z}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourOptions {
    /// Keyhole radius; default 0.5 min(r0, c).
    pub radius: Option<f64>,
    /// Smallest nonzero eigenvalue modulus; computed when absent.
    pub r0: Option<f64>,
    /// Ellipticity constant c, when known.
    pub c: Option<f64>,
    /// Target for the truncation tail.
    pub tol: f64,
    /// Largest acceptable error estimate.
    pub max_error: f64,
    pub t_max: Option<f64>,
    pub order: usize,
    pub arc_panels: usize,
    pub ray_ratio: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        ContourOptions {
            radius: None,
            r0: None,
            c: None,
            tol: 1e-9,
            max_error: 1e-5,
            t_max: None,
            order: 10,
            arc_panels: 16,
            ray_ratio: 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ContourPower {
    pub op: TruncatedOperator,
    pub error_estimate: f64,
    pub tail_bound: f64,
    /// Integer shift m: T^z = T^m T^{z - m}.
    pub shift: u32,
    pub radius: f64,
    pub t_max: f64,
    pub evaluations: usize,
}

/// Shift m = ceil(Re z) + 1 for Re z >= 0, else 0.
pub fn integer_shift(z: Complex64) -> u32 {
    if z.re >= 0.0 {
        z.re.ceil() as u32 + 1
    } else {
        0
    }
}

/// Ray length at which the keyhole tail of lambda^s (lambda - T)^{-1} drops below tol.
pub fn adaptive_t_max(s: Complex64, tol: f64, radius: f64, norm: f64) -> f64 {
    let growth = (s.im.abs() * PI / 2.0).exp();
    let t = (tol * s.re.abs() / (10.0 * growth)).powf(1.0 / s.re);
    t.max(1e3 * radius).max(100.0 * norm).min(1e40)
}

/// T^z = T^m (1 / 2 pi i) integral over the keyhole of lambda^{z-m} (lambda - T)^{-1}.
pub fn power_contour(t: &TruncatedOperator, z: Complex64, opts: &ContourOptions) -> Result<ContourPower> {
    let eig = linalg::eigenvalues(t.matrix())?;
    let norm = linalg::spectral_norm(t.matrix());
    let ktol = KERNEL_TOL * norm;
    if let Some(mu) = eig.iter().find(|m| m.norm() > ktol && m.re <= 0.0) {
        return Err(Error::Branch(format!(
            "eigenvalue {mu} lies in the closed left half-plane"
        )));
    }
    let r0 = match opts.r0 {
        Some(r) => r,
        None => eig
            .iter()
            .map(|m| m.norm())
            .filter(|&m| m > ktol)
            .fold(f64::INFINITY, f64::min),
    };
    let radius = opts.radius.unwrap_or(0.5 * r0.min(opts.c.unwrap_or(f64::INFINITY)));
    if !(radius > 0.0 && radius < r0) {
        return Err(Error::Precondition(format!(
            "keyhole radius {radius} must lie in (0, r0 = {r0}): the contour would cross the spectrum"
        )));
    }
    let m = integer_shift(z);
    let s = z - m as f64;
    let t_max = opts.t_max.unwrap_or_else(|| adaptive_t_max(s, opts.tol, radius, norm));
    let spec = QuadratureSpec {
        contour: Contour::Keyhole {
            radius,
            phi_in: PI / 2.0,
            phi_out: -PI / 2.0,
            t_max,
        },
        order: opts.order,
        arc_panels: opts.arc_panels,
        ray_ratio: opts.ray_ratio,
    };
    let res = contour_quadrature(
        &spec,
        |lambda| {
            let shifted = t.shift(lambda).scale(Complex64::new(-1.0, 0.0));
            let inv = linalg::inverse(shifted.matrix()).ok_or(Error::NearSpectrum {
                lambda,
                distance: 0.0,
            })?;
            Ok(inv * linalg::principal_pow(lambda, s))
        },
        Some(s.re - 1.0),
    )?;
    let mut value = res.value;
    for _ in 0..m {
        value = t.matrix() * value;
    }
    let scale = norm.powi(m as i32);
    let error_estimate = res.error_estimate * scale;
    if error_estimate > opts.max_error {
        return Err(Error::Precision {
            estimate: error_estimate,
            tol: opts.max_error,
        });
    }
    Ok(ContourPower {
        op: t.with_matrix(value, format!("contour power z = {z}")),
        error_estimate,
        tail_bound: res.tail_bound * scale,
        shift: m,
        radius,
        t_max,
        evaluations: res.evaluations,
    })
}

/// Guard g = clamp(0.1 (c' - c), c / 4, c / 2) for the circle gamma_xi.
pub fn circle_guard(c: f64, c_prime: f64) -> f64 {
    (0.1 * (c_prime - c)).clamp(0.25 * c, 0.5 * c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolQuadrature {
    pub order: usize,
    pub panels: usize,
}

impl Default for SymbolQuadrature {
    fn default() -> Self {
        SymbolQuadrature { order: 8, panels: 24 }
    }
}

/// Symbol of T^z: components rho_{wz-j}(z; xi) = (1 / 2 pi i) integral over the
/// clockwise circle gamma_xi of lambda^z sigma_{-w-j}(xi; lambda), j = 0..=J, evaluated
/// numerically at each xi.
#[derive(Clone, Debug)]
pub struct PowerSymbol {
    base: ClassicalSymbol,
    sigma: ClassicalSymbol,
    z: Complex64,
    depth: usize,
    weight: f64,
    c: f64,
    c_prime: f64,
    cutoff: Cutoff,
    quadrature: SymbolQuadrature,
}

/// Builds the power symbol; refuses unless the sampled principal spectra lie in (0, inf).
pub fn power_symbol(rho: &ClassicalSymbol, z: Complex64, depth: usize) -> Result<PowerSymbol> {
    let data = ellipticity_data(rho.theta(), &rho.principal(), &EllipticityConfig::default())?;
    PowerSymbol::with_data(rho, z, depth, &data)
}

impl PowerSymbol {
    pub fn with_data(rho: &ClassicalSymbol, z: Complex64, depth: usize, data: &EllipticityData) -> Result<Self> {
        if !data.positive(1e-10) {
            let bad = data
                .cloud()
                .find(|m| !(m.re > 1e-10 && m.im.abs() <= 1e-10 * m.re.max(1.0)))
                .copied()
                .unwrap_or_default();
            return Err(Error::Branch(format!(
                "principal spectrum leaves (0, inf): eigenvalue {bad}"
            )));
        }
        let sigma = parametric_parametrix(rho, depth)?;
        Ok(PowerSymbol {
            base: rho.clone(),
            sigma,
            z,
            depth,
            weight: rho.order(),
            c: data.c,
            c_prime: data.c_prime,
            cutoff: PARAMETRIX_CUTOFF,
            quadrature: SymbolQuadrature::default(),
        })
    }

    pub fn with_quadrature(mut self, q: SymbolQuadrature) -> Self {
        self.quadrature = q;
        self
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Complex order w z.
    pub fn order(&self) -> Complex64 {
        self.z * self.weight
    }

    pub fn base(&self) -> &ClassicalSymbol {
        &self.base
    }

    pub fn constants(&self) -> (f64, f64) {
        (self.c, self.c_prime)
    }

    /// The circle gamma_xi, clockwise.
    pub fn circle(&self, xi: &[f64]) -> Contour {
        let scale = xi.iter().map(|x| x * x).sum::<f64>().sqrt().powf(self.weight);
        let g = circle_guard(self.c, self.c_prime);
        Contour::Circle {
            center: Complex64::new(0.5 * (self.c + self.c_prime) * scale, 0.0),
            radius: (0.5 * (self.c_prime - self.c) + g) * scale,
            clockwise: true,
        }
    }

    /// Components j = 0..=J at xi != 0, with the quadrature error estimate.
    pub fn eval_components_with_error(&self, xi: &[f64]) -> Result<(Vec<NcElement>, f64)> {
        if xi.iter().map(|x| x * x).sum::<f64>().sqrt() == 0.0 {
            return Err(Error::Precondition("power symbol components are singular at xi = 0".into()));
        }
        let spec = QuadratureSpec {
            order: self.quadrature.order,
            arc_panels: self.quadrature.panels,
            ..QuadratureSpec::new(self.circle(xi))
        };
        let z = self.z;
        let res = contour_quadrature(
            &spec,
            |lambda| {
                let f = linalg::principal_pow(lambda, z);
                Ok(self
                    .sigma
                    .eval_components(xi, Some(lambda))?
                    .into_iter()
                    .map(|v| v.scale(f))
                    .collect::<Vec<_>>())
            },
            None,
        )?;
        let theta = self.base.theta().clone();
        let value = res
            .value
            .into_iter()
            .map(|v: NcElement| if v.is_zero() { NcElement::zero(&theta) } else { v.prune(crate::algebra::DEFAULT_PRUNE) })
            .collect();
        Ok((value, res.error_estimate))
    }

    pub fn eval_components(&self, xi: &[f64]) -> Result<Vec<NcElement>> {
        Ok(self.eval_components_with_error(xi)?.0)
    }

    /// (1 - chi(xi)) sum_j rho_{wz-j}(z; xi).
    pub fn eval(&self, xi: &[f64]) -> Result<NcElement> {
        let theta = self.base.theta();
        let w = self.cutoff.weight(xi);
        if w == 0.0 {
            return Ok(NcElement::zero(theta));
        }
        let mut acc = NcElement::zero(theta);
        for v in self.eval_components(xi)? {
            acc.axpy(Complex64::new(w, 0.0), &v)?;
        }
        Ok(acc.prune(crate::algebra::DEFAULT_PRUNE))
    }

    /// rho_w(xi)^z by functional calculus on the left-multiplication matrix of
    /// rho_w(xi), restricted to the axes its support touches.
    pub fn principal_power_exact(&self, xi: &[f64]) -> Result<NcElement> {
        let theta = self.base.theta();
        let p = self.base.principal().expr.eval(theta, xi, None, self.base.policy())?;
        element_power(&p, self.z, self.base.policy().cutoff)
    }

    pub fn to_record(&self) -> PowerSymbolRecord {
        PowerSymbolRecord {
            kind: "numeric-evaluator".into(),
            z: [self.z.re, self.z.im],
            depth: self.depth,
            weight: self.weight,
            c: self.c,
            c_prime: self.c_prime,
            cutoff: self.cutoff,
            quadrature: self.quadrature,
            base: self.base.to_record(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("power symbol records always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: PowerSymbolRecord = serde_json::from_str(s)?;
        if rec.kind != "numeric-evaluator" {
            return Err(Error::Serde(format!("unexpected component kind {}", rec.kind)));
        }
        let base = ClassicalSymbol::from_record(&rec.base)?;
        let sigma = parametric_parametrix(&base, rec.depth)?;
        Ok(PowerSymbol {
            base,
            sigma,
            z: Complex64::new(rec.z[0], rec.z[1]),
            depth: rec.depth,
            weight: rec.weight,
            c: rec.c,
            c_prime: rec.c_prime,
            cutoff: rec.cutoff,
            quadrature: rec.quadrature,
        })
    }
}

/// A power symbol in the symbol schema, tagged as a numeric evaluator over `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSymbolRecord {
    pub kind: String,
    pub z: [f64; 2],
    pub depth: usize,
    pub weight: f64,
    pub c: f64,
    pub c_prime: f64,
    pub cutoff: Cutoff,
    pub quadrature: SymbolQuadrature,
    pub base: ClassicalSymbolRecord,
}

impl LatticeSymbol for PowerSymbol {
    fn theta(&self) -> &Arc<ThetaMatrix> {
        self.base.theta()
    }

    fn value_at(&self, k: &[i64]) -> Result<NcElement> {
        self.eval(&lattice::as_f64(k))
    }
}

/// a^z for an element with spectrum off (-inf, 0), through its left-multiplication
/// matrix on the box |k|_inf <= cutoff over the axes its support touches.
pub fn element_power(a: &NcElement, z: Complex64, cutoff: usize) -> Result<NcElement> {
    let n = a.dim();
    let active: Vec<bool> = (0..n).map(|j| a.support().any(|k| k[j] != 0)).collect();
    let basis = LatticeBox::restricted(n, cutoff, &active);
    let m = a.left_mult_matrix(&basis);
    let pz = SpectralCalculus::new(&m, 0.0)?.power(z);
    let origin = basis
        .position(&lattice::zero_index(n))
        .expect("the origin lies in every box");
    let col = pz.column(origin).into_owned();
    Ok(NcElement::from_vector(a.theta(), &basis, &col).prune(crate::algebra::DEFAULT_PRUNE))
}

#[derive(Clone, Debug)]
pub struct AbsValue {
    pub op: TruncatedOperator,
    /// ||A* - A||.
    pub hermitian_defect: f64,
    /// ||A^2 - P*P||.
    pub square_defect: f64,
    /// Symbol of (rho_w* rho_w)^{1/2}, evaluated numerically.
    pub principal: Option<PowerSymbol>,
}

/// |P| = (P*P)^{1/2} on the truncation; with a symbol, also the principal symbol
/// |rho_w(xi)| through the power-symbol route.
pub fn abs_value(p: &TruncatedOperator, symbol: Option<&ClassicalSymbol>) -> Result<AbsValue> {
    let pp = p.adjoint().compose(p)?;
    let herm = (pp.matrix() + pp.matrix().adjoint()).scale(0.5);
    let pp = pp.with_matrix(herm, "P*P");
    let a = power_spectral(&pp, Complex64::new(0.5, 0.0))?;
    let hermitian_defect = linalg::spectral_norm(&(a.matrix() - a.matrix().adjoint()));
    let square_defect = linalg::spectral_norm(&(a.matrix() * a.matrix() - pp.matrix()));
    let principal = match symbol {
        Some(s) => {
            let r = s.principal().expr;
            let star = SymbolExpr::product(vec![r.adjoint()?, r]);
            let sq = ClassicalSymbol::new(s.theta(), 2.0 * s.order(), vec![star]).with_policy(s.policy());
            Some(power_symbol(&sq, Complex64::new(0.5, 0.0), 0)?)
        }
        None => None,
    };
    Ok(AbsValue {
        op: a.with_matrix(a.matrix().clone(), "absolute value"),
        hermitian_defect,
        square_defect,
        principal,
    })
}

/// ||Pi (T^{z1} T^{z2} - T^{z1 + z2}) Pi|| with Pi the projector off the kernel cluster.
pub fn group_property_check(t: &TruncatedOperator, z1: Complex64, z2: Complex64) -> Result<f64> {
    let calc = SpectralCalculus::new(t.matrix(), KERNEL_TOL)?;
    let a = calc.power(z1);
    let b = calc.power(z2);
    let c = calc.power(z1 + z2);
    let pi = calc.range_projector();
    let d = &pi * (a * b - c) * &pi;
    Ok(linalg::spectral_norm(&d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::quantize;
    use smallvec::smallvec;
    use std::collections::BTreeMap;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn laplacian(t: &Arc<ThetaMatrix>, shift: f64) -> ClassicalSymbol {
        let mut terms = BTreeMap::new();
        terms.insert(smallvec![2, 0], NcElement::one(t));
        terms.insert(smallvec![0, 2], NcElement::one(t));
        if shift != 0.0 {
            terms.insert(smallvec![0, 0], NcElement::scalar(t, c(shift, 0.0)));
        }
        ClassicalSymbol::differential(t, &terms).unwrap()
    }

    fn diag_entry(op: &TruncatedOperator, k: &[i64]) -> Complex64 {
        let p = op.basis().position(k).unwrap();
        op.matrix()[(p, p)]
    }

    #[test]
    fn spectral_powers_of_laplacian() {
        let t = Arc::new(ThetaMatrix::two(0.4));
        let p1 = quantize(&laplacian(&t, 1.0), 3).unwrap();
        let half = power_spectral(&p1, c(0.5, 0.0)).unwrap();
        assert!((diag_entry(&half, &[1, 1]) - 3f64.sqrt()).norm() < 1e-12);
        let zero = power_spectral(&p1, c(0.0, 0.0)).unwrap();
        assert!(linalg::frobenius(&(zero.matrix() - linalg::identity(p1.dim()))) < 1e-12);
        let p0 = quantize(&laplacian(&t, 0.0), 3).unwrap();
        let one = power_spectral(&p0, c(1.0, 0.0)).unwrap();
        assert!(diag_entry(&one, &[0, 0]).norm() < 1e-12);
        assert!((diag_entry(&one, &[2, 1]) - 5.0).norm() < 1e-12);
        let neg = p1.scale(c(-1.0, 0.0));
        assert!(matches!(power_spectral(&neg, c(0.5, 0.0)), Err(Error::Branch(_))));
    }

    #[test]
    fn non_normal_refused() {
        let t = Arc::new(ThetaMatrix::two(0.4));
        let mut m = CMatrix::identity(9, 9);
        m[(0, 1)] = c(1.0, 0.0);
        let op = TruncatedOperator::new(&t, 1, m, "jordan").unwrap();
        assert!(matches!(power_spectral(&op, c(0.5, 0.0)), Err(Error::NotNormal(_))));
    }

    #[test]
    fn contour_matches_spectral() {
        let t = Arc::new(ThetaMatrix::two(0.4));
        let p = quantize(&laplacian(&t, 1.0), 2).unwrap();
        for z in [c(-0.5, 0.0), c(-1.0, 0.0), c(0.5, 0.3)] {
            let a = power_contour(&p, z, &ContourOptions::default()).unwrap();
            let b = power_spectral(&p, z).unwrap();
            let d = linalg::spectral_norm(&(a.op.matrix() - b.matrix()));
            assert!(d < 1e-6, "z = {z}: {d}");
        }
        let inv = power_contour(&p, c(-1.0, 0.0), &ContourOptions::default()).unwrap();
        let exact = linalg::inverse(p.matrix()).unwrap();
        assert!(linalg::spectral_norm(&(inv.op.matrix() - exact)) < 1e-6);
        // manual shift by one: P^(1/2) = P P^(-1/2)
        let half = p
            .compose(&power_contour(&p, c(-0.5, 0.0), &ContourOptions::default()).unwrap().op)
            .unwrap();
        let b = power_spectral(&p, c(0.5, 0.0)).unwrap();
        assert!(linalg::spectral_norm(&(half.matrix() - b.matrix())) < 1e-5);
        let bad = ContourOptions {
            radius: Some(1.5),
            ..ContourOptions::default()
        };
        assert!(matches!(power_contour(&p, c(-0.5, 0.0), &bad), Err(Error::Precondition(_))));
    }

    #[test]
    fn symbol_principal_is_power_of_principal() {
        let t = Arc::new(ThetaMatrix::two(0.4));
        let s = power_symbol(&laplacian(&t, 0.0), c(0.5, 0.0), 0).unwrap();
        let v = s.eval_components(&[1.0, 1.0]).unwrap();
        assert!((v[0].trace() - 2f64.sqrt()).norm() < 1e-10);
        let one = power_symbol(&laplacian(&t, 0.0), c(1.0, 0.0), 0).unwrap();
        let v = one.eval_components(&[0.3, -1.2]).unwrap();
        assert!((v[0].trace() - (0.09 + 1.44)).norm() < 1e-10);
        // lower-order terms of (|xi|^2 + 1)^z
        let z = c(-0.5, 0.2);
        let s = power_symbol(&laplacian(&t, 1.0), z, 2).unwrap();
        let v = s.eval_components(&[1.0, 2.0]).unwrap();
        let mu = c(5.0, 0.0);
        assert!((v[0].trace() - mu.powc(z)).norm() < 1e-10);
        assert!(v[1].trace().norm() < 1e-10);
        assert!((v[2].trace() - z * mu.powc(z - 1.0)).norm() < 1e-10);
        let back = PowerSymbol::from_json(&s.to_json()).unwrap();
        assert_eq!(back.eval(&[1.0, 2.0]).unwrap(), s.eval(&[1.0, 2.0]).unwrap());
    }

    #[test]
    fn positivity_refused() {
        let t = Arc::new(ThetaMatrix::two(0.4));
        let neg = ClassicalSymbol::new(&t, 2.0, vec![SymbolExpr::xi_norm_sq(2).neg()]);
        assert!(matches!(power_symbol(&neg, c(0.5, 0.0), 0), Err(Error::Branch(_))));
    }

    #[test]
    fn abs_of_imaginary_laplacian() {
        let t = Arc::new(ThetaMatrix::two(0.4));
        let lap = quantize(&laplacian(&t, 0.0), 3).unwrap();
        let p = lap.scale(c(0.0, 1.0));
        let a = abs_value(&p, None).unwrap();
        assert!(linalg::spectral_norm(&(a.op.matrix() - lap.matrix())) < 1e-8);
        assert!(a.hermitian_defect < 1e-10 && a.square_defect < 1e-8);
    }

    #[test]
    fn group_property() {
        let t = Arc::new(ThetaMatrix::two(0.4));
        let p = quantize(&laplacian(&t, 1.0), 3).unwrap();
        assert!(group_property_check(&p, c(0.5, 0.0), c(0.5, 0.0)).unwrap() < 1e-9);
        assert!(group_property_check(&p, c(-1.0, 0.0), c(1.0, 0.0)).unwrap() < 1e-8);
        let p0 = quantize(&laplacian(&t, 0.0), 3).unwrap();
        assert!(group_property_check(&p0, c(0.3, 0.2), c(0.0, 0.0)).unwrap() < 1e-9);
    }

    #[test]
    fn element_power_of_scalar() {
        let t = Arc::new(ThetaMatrix::two(0.4));
        let a = NcElement::scalar(&t, c(4.0, 0.0));
        let r = element_power(&a, c(0.5, 0.0), 4).unwrap();
        assert!((r.trace() - 2.0).norm() < 1e-12);
    }
}
