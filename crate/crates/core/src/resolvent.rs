//! Exact truncated resolvents, minimal growth, parametrix residuals and trace chains.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::parametric_parametrix;
use crate::error::{Error, Result};
use crate::geometry::{angular_distance, loglog_fit, DecayFit, PseudoCone, RAY_GUARD};
use crate::linalg::{self, CMatrix};
use crate::quant::{interior_projector, quantize, TruncatedOperator};
use crate::symbol::ClassicalSymbol;

/// Eigenvalue guard for resolvent calls, relative to ||T||.
pub const EIGEN_GUARD: f64 = 1e-6;

/// Default clustering tolerance, relative to max(1, spectral radius).
pub const CLUSTER_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: Complex64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Eigenvalues sorted by (re, im), with multiplicity.
    pub eigenvalues: Vec<Complex64>,
    pub clusters: Vec<Cluster>,
    /// Absolute clustering tolerance used.
    pub tol: f64,
}

impl Spectrum {
    /// Distance from lambda to the nearest eigenvalue.
    pub fn distance(&self, lambda: Complex64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|mu| (mu - lambda).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest nonzero modulus; eigenvalues with |mu| <= zero_tol count as kernel.
    pub fn r0(&self, zero_tol: f64) -> Option<f64> {
        self.eigenvalues
            .iter()
            .map(|m| m.norm())
            .filter(|&m| m > zero_tol)
            .min_by(f64::total_cmp)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("index,re,im\n");
        for (i, m) in self.eigenvalues.iter().enumerate() {
            s.push_str(&format!("{i},{:.17e},{:.17e}\n", m.re, m.im));
        }
        s
    }
}

/// Eigenvalues of a truncated operator, clustered within `rel_tol` max(1, rho(T)).
pub fn spectrum(t: &TruncatedOperator, rel_tol: f64) -> Result<Spectrum> {
    let eigenvalues = linalg::eigenvalues(t.matrix())?;
    let radius = eigenvalues.iter().map(|m| m.norm()).fold(1.0, f64::max);
    let tol = rel_tol * radius;
    let mut clusters: Vec<(Complex64, usize)> = Vec::new();
    let mut used = vec![false; eigenvalues.len()];
    for i in 0..eigenvalues.len() {
        if used[i] {
            continue;
        }
        let mut sum = eigenvalues[i];
        let mut count = 1;
        used[i] = true;
        for j in (i + 1)..eigenvalues.len() {
            if !used[j] && (eigenvalues[j] - eigenvalues[i]).norm() <= tol {
                used[j] = true;
                sum += eigenvalues[j];
                count += 1;
            }
        }
        clusters.push((sum / count as f64, count));
    }
    Ok(Spectrum {
        eigenvalues,
        clusters: clusters
            .into_iter()
            .map(|(center, multiplicity)| Cluster { center, multiplicity })
            .collect(),
        tol,
    })
}

/// A truncated operator with its spectrum and norm, for repeated resolvent calls.
#[derive(Clone, Debug)]
pub struct ResolventLab {
    op: TruncatedOperator,
    spectrum: Spectrum,
    norm: f64,
}

impl ResolventLab {
    pub fn new(op: TruncatedOperator) -> Result<Self> {
        let spectrum = spectrum(&op, CLUSTER_TOL)?;
        let norm = linalg::spectral_norm(op.matrix());
        Ok(ResolventLab { op, spectrum, norm })
    }

    pub fn op(&self) -> &TruncatedOperator {
        &self.op
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn guard(&self) -> f64 {
        EIGEN_GUARD * self.norm.max(1.0)
    }

    fn check(&self, lambda: Complex64) -> Result<()> {
        let distance = self.spectrum.distance(lambda);
        if distance <= self.guard() {
            return Err(Error::NearSpectrum { lambda, distance });
        }
        Ok(())
    }

    /// (T - lambda)^{-1}.
    pub fn resolvent(&self, lambda: Complex64) -> Result<TruncatedOperator> {
        self.check(lambda)?;
        let m = linalg::inverse(self.op.shift(lambda).matrix()).ok_or(Error::NearSpectrum {
            lambda,
            distance: self.spectrum.distance(lambda),
        })?;
        Ok(self.op.with_matrix(m, "exact resolvent"))
    }

    /// ||(T - lambda)^{-1}|| = 1 / sigma_min(T - lambda).
    pub fn resolvent_norm(&self, lambda: Complex64) -> Result<f64> {
        self.check(lambda)?;
        let s = linalg::singular_values(self.op.shift(lambda).matrix());
        let smin = s.last().copied().unwrap_or(0.0);
        Ok(1.0 / smin)
    }
}

pub fn exact_resolvent(t: &TruncatedOperator, lambda: Complex64) -> Result<TruncatedOperator> {
    ResolventLab::new(t.clone())?.resolvent(lambda)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub ray: f64,
    pub fit: DecayFit,
    pub radii: Vec<f64>,
    pub norms: Vec<f64>,
    pub passed: bool,
}

/// Fits ||(T - t e^{i phi})^{-1}|| against 1 + t over the given radii; passes when the
/// exponent is -1 within 0.05.
pub fn minimal_growth_check(
    lab: &ResolventLab,
    ray: f64,
    radii: &[f64],
    theta_p: Option<&PseudoCone>,
) -> Result<GrowthCheck> {
    if let Some(cone) = theta_p {
        if !cone.contains_angle(ray) {
            return Err(Error::Precondition(format!("ray {ray} is not inside Theta(P)")));
        }
    }
    let zero = lab.guard();
    if let Some(mu) = lab
        .spectrum
        .eigenvalues
        .iter()
        .find(|m| m.norm() > zero && angular_distance(m.arg(), ray) < RAY_GUARD)
    {
        return Err(Error::EigenvalueOnRay { eigenvalue: *mu });
    }
    let norms: Vec<f64> = radii
        .par_iter()
        .map(|&t| lab.resolvent_norm(Complex64::from_polar(t, ray)))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = radii.iter().map(|t| 1.0 + t).collect();
    let fit = loglog_fit(&xs, &norms)?;
    let passed = (fit.exponent + 1.0).abs() <= 0.05;
    Ok(GrowthCheck {
        ray,
        fit,
        radii: radii.to_vec(),
        norms,
        passed,
    })
}

/// Interior margin covering the coefficient radius of the symbol plus the depth.
pub fn default_margin(p: &ClassicalSymbol, depth: usize) -> usize {
    p.coefficient_radius().max(0) as usize + depth
}

fn check_domain(lambda: Complex64, domain: Option<&PseudoCone>) -> Result<()> {
    match domain {
        Some(d) if !d.contains(lambda) => Err(Error::OutsideDomain(lambda)),
        _ => Ok(()),
    }
}

/// Q_J(lambda): the quantized parametric parametrix of depth J.
pub fn parametrix_operator(
    sigma: &ClassicalSymbol,
    lambda: Complex64,
    cutoff: usize,
) -> Result<TruncatedOperator> {
    let mut q = quantize(&sigma.at_lambda(lambda), cutoff)?;
    q.provenance = "parametric parametrix".into();
    Ok(q)
}

fn residual_norm(p_op: &TruncatedOperator, q: &TruncatedOperator, lambda: Complex64, pos: &[usize]) -> f64 {
    let m: CMatrix = p_op.shift(lambda).matrix() * q.matrix() - linalg::identity(p_op.dim());
    let d = pos.len();
    linalg::spectral_norm(&CMatrix::from_fn(d, d, |i, j| m[(pos[i], pos[j])]))
}

/// ||(P - lambda) Q_J(lambda) - 1|| on the interior modes.
pub fn parametrix_residual(
    p: &ClassicalSymbol,
    depth: usize,
    lambda: Complex64,
    cutoff: usize,
    margin: usize,
    domain: Option<&PseudoCone>,
) -> Result<f64> {
    check_domain(lambda, domain)?;
    let p_op = quantize(p, cutoff)?;
    let pos = interior_projector(p_op.basis(), margin)?;
    let sigma = parametric_parametrix(p, depth)?;
    let q = parametrix_operator(&sigma, lambda, cutoff)?;
    Ok(residual_norm(&p_op, &q, lambda, &pos))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventReport {
    pub operator: String,
    pub cutoff: usize,
    pub margin: usize,
    pub depth: usize,
    pub lambdas: Vec<Complex64>,
    /// ||(P - lambda)^{-1}|| on the full box.
    pub exact_norms: Vec<f64>,
    /// residuals[J][i] = ||(P - lambda_i) Q_J - 1|| on the interior.
    pub residuals: Vec<Vec<f64>>,
    /// differences[J][i] = ||(P - lambda_i)^{-1} - Q_J|| on the interior.
    pub differences: Vec<Vec<f64>>,
    /// Fits against 1 + |lambda|: exact norms, then the difference at depth J.
    pub fits: Vec<(String, DecayFit)>,
    /// Grid points dropped for lying too close to the spectrum.
    pub excluded: Vec<Complex64>,
    /// Eigenvalues of smallest modulus (at most 32).
    pub spectrum: Vec<Complex64>,
}

impl ResolventReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("lambda_re,lambda_im,exact_norm");
        for j in 0..=self.depth {
            s.push_str(&format!(",residual_j{j}"));
        }
        for j in 0..=self.depth {
            s.push_str(&format!(",difference_j{j}"));
        }
        s.push('\n');
        for (i, l) in self.lambdas.iter().enumerate() {
            s.push_str(&format!("{:.17e},{:.17e},{:.17e}", l.re, l.im, self.exact_norms[i]));
            for r in &self.residuals {
                s.push_str(&format!(",{:.17e}", r[i]));
            }
            for d in &self.differences {
                s.push_str(&format!(",{:.17e}", d[i]));
            }
            s.push('\n');
        }
        s
    }

    /// Median over the grid of the residual at depth j.
    pub fn median_residual(&self, j: usize) -> f64 {
        median(&self.residuals[j])
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

/// Exact resolvent against parametrices of depth 0..=J along a lambda grid.
pub fn resolvent_vs_parametrix(
    label: &str,
    p: &ClassicalSymbol,
    depth: usize,
    grid: &[Complex64],
    cutoff: usize,
    margin: usize,
) -> Result<ResolventReport> {
    let p_op = quantize(p, cutoff)?;
    let pos = interior_projector(p_op.basis(), margin)?;
    let lab = ResolventLab::new(p_op.clone())?;
    let sigma = parametric_parametrix(p, depth)?;
    let sigmas: Vec<ClassicalSymbol> = (0..=depth).map(|j| sigma.truncated(j + 1)).collect();
    let (kept, excluded): (Vec<Complex64>, Vec<Complex64>) =
        grid.iter().partition(|l| lab.spectrum.distance(**l) > lab.guard());
    type Row = (f64, Vec<f64>, Vec<f64>);
    let rows: Vec<(Complex64, Result<Row>)> = kept
        .par_iter()
        .map(|&lambda| {
            let row = (|| {
                let r = lab.resolvent(lambda)?;
                let exact = linalg::spectral_norm(r.matrix());
                let mut res = Vec::with_capacity(depth + 1);
                let mut diff = Vec::with_capacity(depth + 1);
                for s in &sigmas {
                    let q = parametrix_operator(s, lambda, cutoff)?;
                    res.push(residual_norm(&p_op, &q, lambda, &pos));
                    diff.push(linalg::spectral_norm(&r.sub(&q)?.restrict(&pos)));
                }
                Ok((exact, res, diff))
            })();
            (lambda, row)
        })
        .collect();
    let failures: Vec<(Complex64, String)> = rows
        .iter()
        .filter_map(|(l, r)| r.as_ref().err().map(|e| (*l, e.to_string())))
        .collect();
    if let Some((first_lambda, first_error)) = failures.first().cloned() {
        return Err(Error::PartialFit {
            failures: failures.len(),
            total: kept.len(),
            first_lambda,
            first_error,
        });
    }
    let mut exact_norms = Vec::new();
    let mut residuals = vec![Vec::new(); depth + 1];
    let mut differences = vec![Vec::new(); depth + 1];
    for (_, r) in rows {
        let (e, res, diff) = r?;
        exact_norms.push(e);
        for j in 0..=depth {
            residuals[j].push(res[j]);
            differences[j].push(diff[j]);
        }
    }
    let xs: Vec<f64> = kept.iter().map(|l| 1.0 + l.norm()).collect();
    let mut fits = Vec::new();
    if let Ok(f) = loglog_fit(&xs, &exact_norms) {
        fits.push(("exact_norm".to_string(), f));
    }
    if let Ok(f) = loglog_fit(&xs, &differences[depth]) {
        fits.push((format!("difference_j{depth}"), f));
    }
    let mut snapshot = lab.spectrum.eigenvalues.clone();
    snapshot.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    snapshot.truncate(32);
    Ok(ResolventReport {
        operator: label.to_string(),
        cutoff,
        margin,
        depth,
        lambdas: kept,
        exact_norms,
        residuals,
        differences,
        fits,
        excluded,
        spectrum: snapshot,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceChain {
    pub fit: DecayFit,
    pub lambdas: Vec<Complex64>,
    pub traces: Vec<Complex64>,
    /// Number of resolvent factors.
    pub resolvents: usize,
    pub total_order: f64,
    /// Pass threshold -N + max(0, (a + n) / w) + 0.1.
    pub threshold: f64,
    pub passed: bool,
}

/// Tr[A_0 (P - lambda)^{-1} A_1 ... (P - lambda)^{-1} A_N] along a grid, with the
/// decay fit of |trace| against 1 + |lambda|.
pub fn trace_chain(
    factors: &[(TruncatedOperator, f64)],
    lab: &ResolventLab,
    weight: f64,
    grid: &[Complex64],
) -> Result<TraceChain> {
    if factors.len() < 2 {
        return Err(Error::Precondition(
            "a trace chain needs at least two factors".into(),
        ));
    }
    let n = lab.op.theta().dim() as f64;
    let nres = factors.len() - 1;
    let a: f64 = factors.iter().map(|f| f.1).sum();
    let lhs = -(nres as f64) * weight + a;
    if !(lhs < -n) {
        return Err(Error::Precondition(format!(
            "-N w + a < -n fails: -{nres}*{weight} + {a} = {lhs} is not < -{n}"
        )));
    }
    let traces: Vec<Complex64> = grid
        .par_iter()
        .map(|&lambda| {
            let r = lab.resolvent(lambda)?;
            let mut acc = factors[0].0.matrix().clone();
            for (f, _) in &factors[1..] {
                acc = &acc * r.matrix();
                acc = &acc * f.matrix();
            }
            Ok(acc.trace())
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = grid.iter().map(|l| 1.0 + l.norm()).collect();
    let ys: Vec<f64> = traces.iter().map(|t| t.norm()).collect();
    let fit = loglog_fit(&xs, &ys)?;
    let threshold = -(nres as f64) + ((a + n) / weight).max(0.0) + 0.1;
    let passed = fit.exponent <= threshold;
    Ok(TraceChain {
        fit,
        lambdas: grid.to_vec(),
        traces,
        resolvents: nres,
        total_order: a,
        threshold,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{NcElement, ThetaMatrix};
    use crate::geometry::geometric_grid;
    use smallvec::smallvec;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn laplacian(t: &Arc<ThetaMatrix>, shift: f64) -> ClassicalSymbol {
        let mut terms = BTreeMap::new();
        terms.insert(smallvec![2, 0], NcElement::one(t));
        terms.insert(smallvec![0, 2], NcElement::one(t));
        if shift != 0.0 {
            terms.insert(smallvec![0, 0], NcElement::scalar(t, Complex64::new(shift, 0.0)));
        }
        ClassicalSymbol::differential(t, &terms).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn laplacian_spectrum_is_lattice_norms() {
        let t = Arc::new(ThetaMatrix::two(0.3));
        let op = quantize(&laplacian(&t, 0.0), 2).unwrap();
        let s = spectrum(&op, CLUSTER_TOL).unwrap();
        let mut expect: Vec<f64> = op.basis().points().iter().map(|k| (k[0] * k[0] + k[1] * k[1]) as f64).collect();
        expect.sort_by(f64::total_cmp);
        for (e, m) in expect.iter().zip(&s.eigenvalues) {
            assert!((m - e).norm() < 1e-12);
        }
        let zero = s.clusters.iter().find(|c| c.center.norm() < 1e-9).unwrap();
        assert_eq!(zero.multiplicity, 1);
        let one = s.clusters.iter().find(|c| (c.center.re - 1.0).abs() < 1e-9).unwrap();
        assert_eq!(one.multiplicity, 4);
    }

    #[test]
    fn resolvent_inverts_and_guards() {
        let t = Arc::new(ThetaMatrix::two(0.3));
        let op = quantize(&laplacian(&t, 0.0), 3).unwrap();
        let lab = ResolventLab::new(op.clone()).unwrap();
        let r = lab.resolvent(c(-1.0, 0.0)).unwrap();
        for (p, k) in op.basis().points().iter().enumerate() {
            let expect = 1.0 / ((k[0] * k[0] + k[1] * k[1]) as f64 + 1.0);
            assert!((r.matrix()[(p, p)] - expect).norm() < 1e-14);
        }
        let id = op.shift(c(-1.0, 0.0)).compose(&r).unwrap();
        assert!(linalg::frobenius(&(id.matrix() - linalg::identity(op.dim()))) < 1e-10);
        assert!(matches!(lab.resolvent(c(2.0, 1e-9)), Err(Error::NearSpectrum { .. })));
        // normal bound
        let l = c(-30.0, 7.0);
        let dist = (l - c(0.0, 0.0)).norm().min((l - c(18.0, 0.0)).norm());
        assert!(lab.resolvent_norm(l).unwrap() <= 1.0 / dist + 1e-12);
    }

    #[test]
    fn minimal_growth_on_laplacian() {
        let t = Arc::new(ThetaMatrix::two(0.3));
        let lab = ResolventLab::new(quantize(&laplacian(&t, 1.0), 4).unwrap()).unwrap();
        let radii = geometric_grid(10.0, 1e4, 10);
        for ray in [PI, PI / 2.0] {
            let g = minimal_growth_check(&lab, ray, &radii, None).unwrap();
            assert!(g.passed, "ray {ray}: {}", g.fit.exponent);
        }
        assert!(matches!(
            minimal_growth_check(&lab, 0.0, &radii, None),
            Err(Error::EigenvalueOnRay { .. })
        ));
    }

    #[test]
    fn parametrix_exact_for_laplacian() {
        let t = Arc::new(ThetaMatrix::two(0.3));
        let p = laplacian(&t, 0.0);
        for j in 0..3 {
            let r = parametrix_residual(&p, j, c(-10.0, 0.0), 4, 1, None).unwrap();
            assert!(r < 1e-10, "J = {j}: {r}");
        }
        let mut domain = PseudoCone::slit_plane();
        domain.include_origin = false;
        assert!(matches!(
            parametrix_residual(&p, 0, c(0.0, 0.0), 4, 1, Some(&domain)),
            Err(Error::OutsideDomain(_))
        ));
    }

    #[test]
    fn report_excludes_near_spectrum() {
        let t = Arc::new(ThetaMatrix::two(0.3));
        let p = laplacian(&t, 0.0);
        let grid = vec![c(-1.0, 0.0), c(-10.0, 0.0), c(-100.0, 0.0), c(1.0, 0.0)];
        let rep = resolvent_vs_parametrix("laplacian", &p, 1, &grid, 3, 1).unwrap();
        assert_eq!(rep.excluded, vec![c(1.0, 0.0)]);
        assert!(rep.differences.iter().flatten().all(|d| *d < 1e-10));
        assert!(rep.csv().lines().count() == 4);
    }

    #[test]
    fn trace_chain_precondition_and_decay() {
        let t = Arc::new(ThetaMatrix::two(0.3));
        let lab = ResolventLab::new(quantize(&laplacian(&t, 1.0), 4).unwrap()).unwrap();
        let id = TruncatedOperator::identity(&t, 4);
        let grid: Vec<Complex64> = geometric_grid(10.0, 1e4, 8).into_iter().map(|x| c(-x, 0.0)).collect();
        let r = trace_chain(&[(id.clone(), 0.0), (id.clone(), 0.0)], &lab, 2.0, &grid);
        assert!(matches!(r, Err(Error::Precondition(_))));
        let tc = trace_chain(&[(id.clone(), 0.0), (id.clone(), 0.0), (id, 0.0)], &lab, 2.0, &grid).unwrap();
        assert!((tc.threshold + 0.9).abs() < 1e-12);
        assert!(tc.passed);
        // diagonal oracle
        for (l, tr) in tc.lambdas.iter().zip(&tc.traces) {
            let expect: Complex64 = lab
                .op()
                .basis()
                .points()
                .iter()
                .map(|k| (c((k[0] * k[0] + k[1] * k[1]) as f64 + 1.0, 0.0) - l).powi(-2))
                .sum();
            assert!((tr - expect).norm() <= 1e-10 * expect.norm());
        }
    }
}
