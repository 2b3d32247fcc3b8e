//! One driver per experiment kind. Each returns tables, checks and a JSON summary.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use nctorus::calculus::{ellipticity_data, sharp, star, EllipticityConfig};
use nctorus::geometry::{geometric_grid, hol_d_fit, PseudoCone};
use nctorus::lattice::{self, LatticeBox, MultiIndex};
use nctorus::power::{
    abs_value, integer_shift, power_contour, power_spectral, power_symbol, ContourOptions, KERNEL_TOL,
};
use nctorus::quant::{interior_distance, interior_projector, quantize, schatten_tail, TruncatedOperator};
use nctorus::resolvent::{
    default_margin, minimal_growth_check, resolvent_vs_parametrix, trace_chain, ResolventLab, CLUSTER_TOL,
};
use nctorus::symbol::{Interpolant, LatticeSymbol, ToroidalSymbolTable};
use nctorus::{linalg, NcElement, ThetaMatrix};

use crate::config::{ConfigError, ExperimentKind, ResolvedOperator, Validated};
use crate::dsl::DiffOp;
use crate::report::{num, Check, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Bad kind-specific parameters; reported like a config error.
    #[error("invalid params: {0}")]
    Params(String),
    #[error(transparent)]
    Numerical(#[from] nctorus::Error),
}

impl From<RunError> for ConfigError {
    fn from(e: RunError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub tolerances: BTreeMap<String, f64>,
    pub results: serde_json::Value,
}

impl Outcome {
    fn tol(&mut self, name: &str, v: f64) {
        self.tolerances.insert(name.to_string(), v);
    }
}

type Run = Result<Outcome, RunError>;

fn params<T: DeserializeOwned + Default>(v: &Validated) -> Result<T, RunError> {
    if v.config.params.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.config.params.clone()).map_err(|e| RunError::Params(e.to_string()))
}

fn operator(v: &Validated) -> &ResolvedOperator {
    v.operator.as_ref().expect("validated configs carry an operator for this kind")
}

fn c(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

pub fn run(v: &Validated) -> Run {
    match v.kind {
        ExperimentKind::Spectrum => spectrum(v),
        ExperimentKind::ComposeCheck => compose_check(v),
        ExperimentKind::ParametrixStudy => parametrix_study(v),
        ExperimentKind::ResolventSweep => resolvent_sweep(v),
        ExperimentKind::MinimalGrowth => minimal_growth(v),
        ExperimentKind::Schatten => schatten(v),
        ExperimentKind::Power => power(v),
        ExperimentKind::Abs => abs(v),
        ExperimentKind::TraceChain => trace(v),
        ExperimentKind::PhiCheck => phi_check(v),
    }
}

/// Points t e^{i ray} with t geometric in [from, to].
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RayGrid {
    ray: f64,
    from: f64,
    to: f64,
    count: usize,
}

impl Default for RayGrid {
    fn default() -> Self {
        RayGrid {
            ray: PI,
            from: 1.0,
            to: 1e4,
            count: 10,
        }
    }
}

impl RayGrid {
    fn points(&self) -> Result<Vec<Complex64>, RunError> {
        if !(self.from > 0.0 && self.to >= self.from && self.count >= 1) {
            return Err(RunError::Params("grid needs 0 < from <= to and count >= 1".into()));
        }
        Ok(geometric_grid(self.from, self.to, self.count)
            .into_iter()
            .map(|t| Complex64::from_polar(t, self.ray))
            .collect())
    }
}

// ---------------------------------------------------------------- spectrum

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpectrumParams {
    /// "laplacian": compare against {|k|^2 : |k|_inf <= N}.
    oracle: Option<String>,
}

fn spectrum(v: &Validated) -> Run {
    let p: SpectrumParams = params(v)?;
    let op = quantize(&operator(v).symbol, v.config.cutoff)?;
    let sp = nctorus::resolvent::spectrum(&op, CLUSTER_TOL)?;
    let mut out = Outcome::default();
    out.tol("cluster_rel", CLUSTER_TOL);
    let mut t = Table::new("spectrum", &["index", "re", "im"]);
    for (i, m) in sp.eigenvalues.iter().enumerate() {
        t.push([i.to_string(), num(m.re), num(m.im)]);
    }
    let mut cl = Table::new("clusters", &["re", "im", "multiplicity"]);
    for k in &sp.clusters {
        cl.push([num(k.center.re), num(k.center.im), k.multiplicity.to_string()]);
    }
    match p.oracle.as_deref() {
        None => {}
        Some("laplacian") => {
            let mut expect: Vec<f64> = op
                .basis()
                .points()
                .iter()
                .map(|k| k.iter().map(|&x| (x * x) as f64).sum())
                .collect();
            expect.sort_by(f64::total_cmp);
            let mut got: Vec<Complex64> = sp.eigenvalues.clone();
            got.sort_by(|a, b| a.re.total_cmp(&b.re));
            let err = got
                .iter()
                .zip(&expect)
                .map(|(g, e)| (g - e).norm())
                .fold(0.0, f64::max);
            out.tol("oracle", 1e-10);
            out.checks.push(Check::at_most("max |eigenvalue - |k|^2|", err, 1e-10));
        }
        Some(o) => return Err(RunError::Params(format!("unknown spectrum oracle {o:?}"))),
    }
    out.results = json!({
        "eigenvalues": sp.eigenvalues.len(),
        "clusters": sp.clusters.len(),
        "cluster_tol": sp.tol,
    });
    out.tables = vec![t, cl];
    Ok(out)
}

// ----------------------------------------------------------- compose-check

/// Random differential operator of order <= `order` whose coefficients are sparse
/// elements supported in |k|_inf <= radius.
pub fn random_diff_op(rng: &mut impl Rng, theta: &Arc<ThetaMatrix>, order: u32, radius: i64) -> DiffOp {
    let n = theta.dim();
    let mut terms: BTreeMap<MultiIndex, NcElement> = BTreeMap::new();
    for s in 0..=order {
        for alpha in lattice::multi_indices(n, s) {
            // keep the leading part present, thin out the rest
            if s < order && rng.gen_bool(0.3) {
                continue;
            }
            let count = rng.gen_range(1..=3);
            let items: Vec<(lattice::Index, Complex64)> = (0..count)
                .map(|_| {
                    let k: lattice::Index = (0..n).map(|_| rng.gen_range(-radius..=radius)).collect();
                    (k, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                })
                .collect();
            let a = NcElement::from_coeffs(theta, items).expect("indices have dimension n");
            terms.insert(alpha, a);
        }
    }
    let mut op = DiffOp::zero(theta);
    for (alpha, a) in terms {
        let mut mono = DiffOp::multiplication(a);
        for (j, &e) in alpha.iter().enumerate() {
            for _ in 0..e {
                mono = mono.compose(&DiffOp::derivation(theta, j)).expect("same theta");
            }
        }
        op = op.add(&mono);
    }
    op
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ComposeParams {
    pairs: usize,
    order: u32,
    radius: i64,
    tolerance: f64,
}

impl Default for ComposeParams {
    fn default() -> Self {
        ComposeParams {
            pairs: 20,
            order: 2,
            radius: 2,
            tolerance: 1e-10,
        }
    }
}

fn compose_check(v: &Validated) -> Run {
    let p: ComposeParams = params(v)?;
    let cutoff = v.config.cutoff;
    let margin = v.config.margin.unwrap_or(p.radius.max(0) as usize);
    interior_projector(&LatticeBox::new(v.theta.dim(), cutoff), margin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(v.config.seed);
    let pairs: Vec<(DiffOp, DiffOp)> = (0..p.pairs)
        .map(|_| {
            let a = random_diff_op(&mut rng, &v.theta, p.order, p.radius);
            let b = random_diff_op(&mut rng, &v.theta, p.order, p.radius);
            (a, b)
        })
        .collect();
    let rows: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|(a, b)| -> nctorus::Result<(f64, f64)> {
            let sa = a.symbol()?;
            let sb = b.symbol()?;
            let depth = (a.order() + b.order()) as usize;
            let qa = quantize(&sa, cutoff)?;
            let qb = quantize(&sb, cutoff)?;
            let qab = quantize(&sharp(&sa, &sb, depth)?, cutoff)?;
            let compose = interior_distance(&qa.compose(&qb)?, &qab, margin)?;
            let qstar = quantize(&star(&sa, a.order() as usize)?, cutoff)?;
            let adjoint = interior_distance(&qa.adjoint(), &qstar, margin)?;
            Ok((compose, adjoint))
        })
        .collect::<nctorus::Result<_>>()?;
    let mut t = Table::new("compose", &["pair", "a", "b", "compose_error", "adjoint_error"]);
    for (i, ((a, b), (ce, ae))) in pairs.iter().zip(&rows).enumerate() {
        t.push([i.to_string(), a.to_string(), b.to_string(), num(*ce), num(*ae)]);
    }
    let max_c = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_a = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let mut out = Outcome::default();
    out.tol("compose", p.tolerance);
    out.tol("adjoint", p.tolerance);
    out.checks.push(Check::at_most("max interior composition error", max_c, p.tolerance));
    out.checks.push(Check::at_most("max interior adjoint error", max_a, p.tolerance));
    out.results = json!({ "pairs": p.pairs, "margin": margin, "max_compose_error": max_c, "max_adjoint_error": max_a });
    out.tables = vec![t];
    Ok(out)
}

// -------------------------------------------------------- parametrix-study

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParametrixParams {
    depth: usize,
    grid: RayGrid,
    /// Explicit lambdas as [re, im]; overrides `grid`.
    lambdas: Option<Vec<[f64; 2]>>,
    /// Bound on the interior difference to the exact resolvent at the largest depth.
    difference_tol: Option<f64>,
    /// Required ratio median residual(J=0) / median residual(J=depth).
    min_reduction: Option<f64>,
}

impl Default for ParametrixParams {
    fn default() -> Self {
        ParametrixParams {
            depth: 3,
            grid: RayGrid::default(),
            lambdas: None,
            difference_tol: None,
            min_reduction: None,
        }
    }
}

fn parametrix_study(v: &Validated) -> Run {
    let p: ParametrixParams = params(v)?;
    let op = operator(v);
    let grid = match &p.lambdas {
        Some(ls) => ls.iter().map(|l| c(*l)).collect(),
        None => p.grid.points()?,
    };
    let margin = v
        .config
        .margin
        .unwrap_or_else(|| default_margin(&op.symbol, p.depth));
    let rep = resolvent_vs_parametrix(&op.label, &op.symbol, p.depth, &grid, v.config.cutoff, margin)?;
    let mut out = Outcome::default();
    let medians: Vec<f64> = (0..=p.depth).map(|j| rep.median_residual(j)).collect();
    if let Some(tol) = p.difference_tol {
        let worst = rep.differences[p.depth].iter().copied().fold(0.0, f64::max);
        out.tol("difference", tol);
        out.checks.push(Check::at_most(
            format!("max interior |R - Q_{}|", p.depth),
            worst,
            tol,
        ));
    }
    if let Some(f) = p.min_reduction {
        let ratio = medians[0] / medians[p.depth];
        out.tol("min_reduction", f);
        out.checks.push(Check {
            name: format!("median residual reduction J=0 -> J={}", p.depth),
            value: ratio,
            tolerance: f,
            passed: ratio >= f,
        });
    }
    let mut fits = Table::new("fits", &["series", "exponent", "intercept", "residual", "flagged"]);
    for (name, f) in &rep.fits {
        fits.push([name.clone(), num(f.exponent), num(f.intercept), num(f.residual), f.flagged.to_string()]);
    }
    out.results = json!({
        "margin": margin,
        "median_residuals": medians,
        "excluded": rep.excluded.iter().map(|l| [l.re, l.im]).collect::<Vec<_>>(),
    });
    out.tables = vec![table_from_csv("parametrix", &rep.csv()), fits];
    Ok(out)
}

/// Re-wraps a core CSV string (header line plus rows) as a table.
fn table_from_csv(name: &str, body: &str) -> Table {
    let mut lines = body.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let mut t = Table::new(name, &header);
    for l in lines {
        t.push(l.split(',').map(str::to_string));
    }
    t
}

// --------------------------------------------------------- resolvent-sweep

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepParams {
    rays: Vec<f64>,
    from: f64,
    to: f64,
    count: usize,
    /// Expected pooled exponent, checked within `exponent_tol`.
    expected_exponent: Option<f64>,
    exponent_tol: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            rays: vec![PI, 0.75 * PI, 0.5 * PI],
            from: 10.0,
            to: 1e4,
            count: 12,
            expected_exponent: None,
            exponent_tol: 0.05,
        }
    }
}

fn ray_cone(rays: &[f64]) -> Result<PseudoCone, RunError> {
    let lo = rays.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return Err(RunError::Params("at least one ray is required".into()));
    }
    Ok(PseudoCone::sector(lo - 1e-3, hi + 1e-3)?)
}

fn resolvent_sweep(v: &Validated) -> Run {
    let p: SweepParams = params(v)?;
    let op = quantize(&operator(v).symbol, v.config.cutoff)?;
    let lab = ResolventLab::new(op)?;
    let radii = geometric_grid(p.from, p.to, p.count);
    let within = ray_cone(&p.rays)?;
    let fit = hol_d_fit(|l| lab.resolvent_norm(l), &within, None, &p.rays, &radii)?;
    let mut t = Table::new("sweep", &["ray", "t", "re", "im", "norm", "distance"]);
    for &ray in &p.rays {
        for &r in &radii {
            let l = Complex64::from_polar(r, ray);
            t.push([num(ray), num(r), num(l.re), num(l.im), num(lab.resolvent_norm(l)?), num(lab.spectrum().distance(l))]);
        }
    }
    let mut out = Outcome::default();
    if let Some(e) = p.expected_exponent {
        out.tol("exponent", p.exponent_tol);
        out.checks.push(Check::near("pooled resolvent exponent", fit.pooled.exponent, e, p.exponent_tol));
    }
    out.results = json!({
        "pooled_exponent": fit.pooled.exponent,
        "spread": fit.spread,
        "non_uniform": fit.non_uniform,
    });
    out.tables = vec![t, table_from_csv("hol_fit", &fit.csv())];
    Ok(out)
}

// ---------------------------------------------------------- minimal-growth

fn minimal_growth(v: &Validated) -> Run {
    let p: SweepParams = params(v)?;
    let sym = &operator(v).symbol;
    let data = ellipticity_data(&v.theta, &sym.principal(), &EllipticityConfig::default())?;
    let lab = ResolventLab::new(quantize(sym, v.config.cutoff)?)?;
    let radii = geometric_grid(p.from, p.to, p.count);
    let mut out = Outcome::default();
    out.tol("exponent", 0.05);
    let mut norms = Table::new("growth", &["ray", "t", "norm"]);
    let mut fits = Table::new("fits", &["ray", "exponent", "residual", "passed", "error"]);
    let mut exps = Vec::new();
    for &ray in &p.rays {
        match minimal_growth_check(&lab, ray, &radii, Some(&data.theta_p)) {
            Ok(g) => {
                for (t, n) in g.radii.iter().zip(&g.norms) {
                    norms.push([num(ray), num(*t), num(*n)]);
                }
                fits.push([num(ray), num(g.fit.exponent), num(g.fit.residual), g.passed.to_string(), String::new()]);
                out.checks.push(Check::near(format!("exponent on ray {ray}"), g.fit.exponent, -1.0, 0.05));
                exps.push(json!([ray, g.fit.exponent]));
            }
            Err(e) => {
                fits.push([num(ray), String::new(), String::new(), "false".into(), e.to_string()]);
                out.checks.push(Check::failed(format!("exponent on ray {ray}")));
                exps.push(json!([ray, e.to_string()]));
            }
        }
    }
    out.results = json!({ "exponents": exps, "theta_p": data.theta_p });
    out.tables = vec![norms, fits];
    Ok(out)
}

// ---------------------------------------------------------------- schatten

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SchattenParams {
    lambda: [f64; 2],
    q: f64,
    /// Defaults to -order / n.
    expected_slope: Option<f64>,
    slope_tol: f64,
}

impl Default for SchattenParams {
    fn default() -> Self {
        SchattenParams {
            lambda: [-1.0, 0.0],
            q: 1.0,
            expected_slope: None,
            slope_tol: 0.1,
        }
    }
}

fn schatten(v: &Validated) -> Run {
    let p: SchattenParams = params(v)?;
    let sym = &operator(v).symbol;
    let lab = ResolventLab::new(quantize(sym, v.config.cutoff)?)?;
    let r = lab.resolvent(c(p.lambda))?;
    let tail = schatten_tail(&r, p.q)?;
    let expected = p
        .expected_slope
        .unwrap_or(-sym.order() / v.theta.dim() as f64);
    let mut out = Outcome::default();
    out.tol("slope", p.slope_tol);
    out.checks.push(Check::near("singular value slope", tail.fit.exponent, expected, p.slope_tol));
    let mut t = Table::new("singular_values", &["index", "singular_value"]);
    for (i, m) in tail.singular_values.iter().enumerate() {
        t.push([i.to_string(), num(*m)]);
    }
    out.results = json!({
        "slope": tail.fit.exponent,
        "expected_slope": expected,
        "weak_norm": tail.weak_norm,
        "fit_range": tail.fit.range,
    });
    out.tables = vec![t];
    Ok(out)
}

// ------------------------------------------------------------------- power

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PowerParams {
    z: [f64; 2],
    depth: usize,
    /// Also quantize the power symbol (slow: one contour per lattice point).
    symbol: bool,
    route_tol: f64,
    principal_tol: f64,
    samples: usize,
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams {
            z: [-0.5, 0.0],
            depth: 4,
            symbol: true,
            route_tol: 1e-6,
            principal_tol: 1e-6,
            samples: 10,
        }
    }
}

fn power(v: &Validated) -> Run {
    let p: PowerParams = params(v)?;
    let z = c(p.z);
    let sym = &operator(v).symbol;
    let op = quantize(sym, v.config.cutoff)?;
    let spectral = power_spectral(&op, z)?;
    let contour = power_contour(&op, z, &ContourOptions::default())?;
    let route = linalg::spectral_norm(spectral.sub(&contour.op)?.matrix());
    let mut out = Outcome::default();
    out.tol("kernel_rel", KERNEL_TOL);
    out.tol("route", p.route_tol);
    out.tol("principal", p.principal_tol);
    out.checks.push(Check::at_most("||spectral - contour||", route, p.route_tol));
    let mut rows = Table::new("routes", &["comparison", "error"]);
    rows.push(["spectral-contour".to_string(), num(route)]);
    let mut results = json!({
        "z": p.z,
        "shift": integer_shift(z),
        "contour_error_estimate": contour.error_estimate,
        "contour_t_max": contour.t_max,
        "spectral_vs_contour": route,
    });
    if p.symbol {
        let ps = power_symbol(sym, z, p.depth)?;
        let n = v.theta.dim();
        let mut principal_err: f64 = 0.0;
        let mut samples = Table::new("principal", &["xi", "error"]);
        for (i, xi) in nctorus::geometry::sphere_grid(n, p.samples).iter().enumerate() {
            let scale = 1.0 + i as f64;
            let xi: Vec<f64> = xi.iter().map(|x| x * scale).collect();
            let comps = ps.eval_components(&xi)?;
            let exact = ps.principal_power_exact(&xi)?;
            let e = comps[0].sub(&exact)?.max_abs();
            principal_err = principal_err.max(e);
            samples.push([format!("{xi:?}"), num(e)]);
        }
        out.checks.push(Check::at_most("principal symbol vs rho^z", principal_err, p.principal_tol));
        let q = quantize(&ps, v.config.cutoff)?;
        let margin = v.config.margin.unwrap_or(0);
        let pos = interior_projector(op.basis(), margin)?;
        let sym_err = linalg::spectral_norm(&spectral.sub(&q)?.restrict(&pos));
        rows.push(["spectral-symbol interior".to_string(), num(sym_err)]);
        results["spectral_vs_symbol"] = json!(sym_err);
        results["principal_error"] = json!(principal_err);
        out.tables.push(samples);
    }
    out.results = results;
    out.tables.insert(0, rows);
    Ok(out)
}

// --------------------------------------------------------------------- abs

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AbsParams {
    tolerance: f64,
}

impl Default for AbsParams {
    fn default() -> Self {
        AbsParams { tolerance: 1e-8 }
    }
}

fn abs(v: &Validated) -> Run {
    let p: AbsParams = params(v)?;
    let sym = &operator(v).symbol;
    let op = quantize(sym, v.config.cutoff)?;
    let a = abs_value(&op, None)?;
    let mut out = Outcome::default();
    out.tol("square", p.tolerance);
    out.checks.push(Check::at_most("|| |P|^2 - P*P ||", a.square_defect, p.tolerance));
    let mut eig = linalg::eigenvalues(a.op.matrix())?;
    eig.sort_by(|x, y| x.re.total_cmp(&y.re));
    let sv = linalg::singular_values(op.matrix());
    let mut t = Table::new("abs", &["index", "abs_eigenvalue", "singular_value"]);
    for (i, (e, s)) in eig.iter().zip(sv.iter().rev()).enumerate() {
        t.push([i.to_string(), num(e.re), num(*s)]);
    }
    out.results = json!({
        "hermitian_defect": a.hermitian_defect,
        "square_defect": a.square_defect,
    });
    out.tables = vec![t];
    Ok(out)
}

// ------------------------------------------------------------- trace-chain

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TraceParams {
    resolvents: usize,
    grid: RayGrid,
    oracle_tol: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams {
            resolvents: 2,
            grid: RayGrid {
                from: 10.0,
                ..RayGrid::default()
            },
            oracle_tol: 0.1,
        }
    }
}

fn trace(v: &Validated) -> Run {
    let p: TraceParams = params(v)?;
    let sym = &operator(v).symbol;
    let op = quantize(sym, v.config.cutoff)?;
    let id = TruncatedOperator::identity(&v.theta, v.config.cutoff);
    let factors: Vec<(TruncatedOperator, f64)> = (0..=p.resolvents).map(|_| (id.clone(), 0.0)).collect();
    let lab = ResolventLab::new(op)?;
    let grid = p.grid.points()?;
    let chain = trace_chain(&factors, &lab, sym.order(), &grid)?;
    // identity factors: the trace is the eigenvalue sum of (mu - lambda)^{-N}
    let oracle: Vec<f64> = grid
        .iter()
        .map(|&l| {
            lab.spectrum()
                .eigenvalues
                .iter()
                .map(|&m| (m - l).powi(-(p.resolvents as i32)))
                .sum::<Complex64>()
                .norm()
        })
        .collect();
    let xs: Vec<f64> = grid.iter().map(|l| 1.0 + l.norm()).collect();
    let oracle_fit = nctorus::geometry::loglog_fit(&xs, &oracle)?;
    let mut out = Outcome::default();
    out.tol("oracle_slope", p.oracle_tol);
    out.checks.push(Check {
        name: "trace exponent below threshold".into(),
        value: chain.fit.exponent,
        tolerance: chain.threshold,
        passed: chain.passed,
    });
    out.checks.push(Check::near("trace exponent vs eigenvalue oracle", chain.fit.exponent, oracle_fit.exponent, p.oracle_tol));
    let mut t = Table::new("trace", &["lambda_re", "lambda_im", "trace_re", "trace_im", "oracle_abs"]);
    for ((l, tr), o) in grid.iter().zip(&chain.traces).zip(&oracle) {
        t.push([num(l.re), num(l.im), num(tr.re), num(tr.im), num(*o)]);
    }
    out.results = json!({
        "exponent": chain.fit.exponent,
        "threshold": chain.threshold,
        "oracle_exponent": oracle_fit.exponent,
    });
    out.tables = vec![t];
    Ok(out)
}

// --------------------------------------------------------------- phi-check

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PhiParams {
    delta: f64,
    half_width: f64,
}

impl Default for PhiParams {
    fn default() -> Self {
        PhiParams {
            delta: PI / 2.0,
            half_width: 160.0,
        }
    }
}

fn phi_check(v: &Validated) -> Run {
    let p: PhiParams = params(v)?;
    let phi = Interpolant::new(p.delta)?;
    let n = v.theta.dim();
    let big = LatticeBox::new(n, 2 * v.config.cutoff);
    let mut t = Table::new("phi", &["k", "value"]);
    let mut worst_zero: f64 = 0.0;
    for k in big.points() {
        let xi = lattice::as_f64(&k);
        let val = phi.phi(&xi);
        if lattice::sup_norm(&k) > 0 {
            worst_zero = worst_zero.max(val.abs());
        }
        t.push([format!("{k:?}"), num(val)]);
    }
    let at0 = (phi.phi(&vec![0.0; n]) - 1.0).abs();
    let mass = phi.integral_1d(p.half_width).powi(n as i32);
    // extend-then-restrict on a random table
    let mut rng = ChaCha8Rng::seed_from_u64(v.config.seed);
    let basis = LatticeBox::new(n, v.config.cutoff);
    let mut table = ToroidalSymbolTable::new(&v.theta);
    for k in basis.points() {
        let l: lattice::Index = (0..n).map(|_| rng.gen_range(-2..=2)).collect();
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        table.insert(k, NcElement::monomial(&v.theta, l, c));
    }
    let ext = table.extend(&phi);
    let mut restrict: f64 = 0.0;
    for k in basis.points() {
        let d = ext.eval(&lattice::as_f64(&k))?.sub(&table.value_at(&k)?)?;
        restrict = restrict.max(d.max_abs());
    }
    let mut out = Outcome::default();
    out.tol("lattice", 1e-10);
    out.tol("mass", 1e-6);
    out.tol("restrict", 1e-12);
    out.checks.push(Check::at_most("|phi(0) - 1|", at0, 1e-10));
    out.checks.push(Check::at_most("max |phi(k)|, 0 < |k| <= 2N", worst_zero, 1e-10));
    out.checks.push(Check::near("integral of phi", mass, 1.0, 1e-6));
    out.checks.push(Check::at_most("extend then restrict", restrict, 1e-12));
    out.results = json!({ "phi0_error": at0, "max_lattice": worst_zero, "mass": mass, "restrict": restrict });
    out.tables = vec![t];
    Ok(out)
}
