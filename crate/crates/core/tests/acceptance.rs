//! Acceptance criteria A1-A12. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails. Pass substrings of criterion ids to filter.

mod common;

use std::f64::consts::{PI, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallvec::smallvec;

use nctorus::calculus::{ellipticity_data, parametric_parametrix, sharp, star, EllipticityConfig};
use nctorus::geometry::{geometric_grid, hol_d_fit, loglog_fit, sphere_grid, PseudoCone};
use nctorus::lattice::{self, Index, LatticeBox};
use nctorus::power::{
    abs_value, group_property_check, power_contour, power_spectral, power_symbol, ContourOptions,
};
use nctorus::quant::{interior_projector, quantize, schatten_tail, TruncatedOperator};
use nctorus::resolvent::{default_margin, resolvent_vs_parametrix, trace_chain, minimal_growth_check, ResolventLab};
use nctorus::symbol::{ClassicalSymbol, EvalPolicy, Interpolant, LatticeSymbol, ToroidalSymbolTable};
use nctorus::{linalg, NcElement, ThetaMatrix};

use common::*;

/// Ok(detail) on pass, Err(detail) on fail.
type Verdict = Result<String, String>;

fn verdict(pass: bool, detail: String) -> Verdict {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const THETAS: [f64; 3] = [0.0, 0.25, 1.0 / SQRT_2];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// A1 and A2 share the ensemble: 20 pairs per theta, order <= 2, radius <= 2, N = 8, margin 6.
fn ensemble(theta: &Arc<ThetaMatrix>, seed: u64) -> Vec<(ClassicalSymbol, ClassicalSymbol)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..20)
        .map(|_| {
            let oa = rng.gen_range(0..=2);
            let ob = rng.gen_range(0..=2);
            (
                random_differential(&mut rng, theta, oa, 2),
                random_differential(&mut rng, theta, ob, 2),
            )
        })
        .collect()
}

fn a1() -> Verdict {
    let (cutoff, margin) = (8, 6);
    let mut worst: f64 = 0.0;
    for (i, &t) in THETAS.iter().enumerate() {
        let th = theta2(t);
        let pos = interior_projector(&LatticeBox::new(2, cutoff), margin).unwrap();
        for (a, b) in ensemble(&th, 100 + i as u64) {
            let depth = (a.order() + b.order()) as usize;
            let qa = quantize(&a, cutoff).unwrap();
            let qb = quantize(&b, cutoff).unwrap();
            let qab = quantize(&sharp(&a, &b, depth).unwrap(), cutoff).unwrap();
            let prod = qa.matrix() * qb.matrix();
            worst = worst.max(max_entry(&prod, qab.matrix(), &pos));
        }
    }
    verdict(worst <= 1e-10, format!("max interior entry error {worst:.3e} over 60 pairs (tol 1e-10)"))
}

fn a2() -> Verdict {
    let (cutoff, margin) = (8, 6);
    let mut worst: f64 = 0.0;
    for (i, &t) in THETAS.iter().enumerate() {
        let th = theta2(t);
        let pos = interior_projector(&LatticeBox::new(2, cutoff), margin).unwrap();
        for (a, b) in ensemble(&th, 100 + i as u64) {
            for s in [a, b] {
                let q = quantize(&s, cutoff).unwrap();
                let qs = quantize(&star(&s, s.order() as usize).unwrap(), cutoff).unwrap();
                worst = worst.max(max_entry(&q.matrix().adjoint(), qs.matrix(), &pos));
            }
        }
    }
    verdict(worst <= 1e-10, format!("max interior entry error {worst:.3e} over 120 symbols (tol 1e-10)"))
}

fn a3() -> Verdict {
    let cutoff = 6i64;
    let mut expect: Vec<f64> = Vec::new();
    for a in -cutoff..=cutoff {
        for b in -cutoff..=cutoff {
            expect.push((a * a + b * b) as f64);
        }
    }
    expect.sort_by(f64::total_cmp);
    let mut worst: f64 = 0.0;
    for &t in &THETAS {
        let th = theta2(t);
        let op = quantize(&laplacian(&th, 0.0), cutoff as usize).unwrap();
        let mut ev = linalg::eigenvalues(op.matrix()).unwrap();
        ev.sort_by(|x, y| x.re.total_cmp(&y.re));
        if ev.len() != expect.len() {
            return Err(format!("{} eigenvalues, expected {}", ev.len(), expect.len()));
        }
        for (e, x) in ev.iter().zip(&expect) {
            worst = worst.max((e - x).norm());
        }
    }
    verdict(worst <= 1e-10, format!("max |eigenvalue - |k|^2| {worst:.3e} for 3 theta, N = 6 (tol 1e-10)"))
}

fn a4() -> Verdict {
    let th = theta2(0.25);
    // Delta, depth 0
    let grid: Vec<Complex64> = geometric_grid(1.0, 1e4, 10).into_iter().map(|t| c(-t, 0.0)).collect();
    let rep = resolvent_vs_parametrix("Delta", &laplacian(&th, 0.0), 0, &grid, 8, 1).unwrap();
    let diff = rep.differences[0].iter().copied().fold(0.0, f64::max);
    // k Delta k, depths 0..3
    let p = k_laplacian_k(&th, 0.0);
    let grid: Vec<Complex64> = [0.5, 0.75, 1.0, 1.5, 2.0].iter().map(|s| c(-100.0 * s, 0.0)).collect();
    let rep = resolvent_vs_parametrix("k Delta k", &p, 3, &grid, 10, 4).unwrap();
    let m: Vec<f64> = (0..=3).map(|j| rep.median_residual(j)).collect();
    let factor = m[0] / m[3];
    verdict(
        diff <= 1e-10 && factor >= 5.0,
        format!(
            "Delta: max interior |R - Q_0| {diff:.3e} (tol 1e-10); k Delta k medians J=0..3 {:.3e} {:.3e} {:.3e} {:.3e}, reduction {factor:.2} (need >= 5)",
            m[0], m[1], m[2], m[3]
        ),
    )
}

fn a5() -> Verdict {
    let th = theta2(0.25);
    let radii = geometric_grid(10.0, 1e4, 12);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, p) in [("Delta+1", laplacian(&th, 1.0)), ("k Delta k+1", k_laplacian_k(&th, 1.0))] {
        let data = ellipticity_data(&th, &p.principal(), &EllipticityConfig::default()).unwrap();
        let lab = ResolventLab::new(quantize(&p, 8).unwrap()).unwrap();
        for ray in [PI, 0.75 * PI, 0.5 * PI] {
            let g = minimal_growth_check(&lab, ray, &radii, Some(&data.theta_p)).map_err(|e| e.to_string())?;
            worst = worst.max((g.fit.exponent + 1.0).abs());
            parts.push(format!("{name}@{:.2}: {:.4}", ray, g.fit.exponent));
        }
    }
    verdict(worst <= 0.05, format!("{} (max deviation {worst:.4}, tol 0.05)", parts.join(", ")))
}

fn a6() -> Verdict {
    let th = theta2(0.25);
    // the inverse of k^2 |xi|^2 - lambda is an infinite Fourier series; widen its box
    let p = k_laplacian_k(&th, 0.0).with_policy(EvalPolicy { cutoff: 16, tol: 1e-10 });
    let data = ellipticity_data(&th, &p.principal(), &EllipticityConfig::default()).unwrap();
    let sigma = parametric_parametrix(&p, 0).unwrap();
    let rays = [PI, 0.75 * PI, 0.5 * PI];
    let within = PseudoCone::sector(0.5 * PI - 0.05, PI + 0.05).unwrap();
    let radii = geometric_grid(10.0, 1e4, 12);
    let mut worst: f64 = 0.0;
    let mut exps = Vec::new();
    for (i, xi) in sphere_grid(2, 5).into_iter().enumerate() {
        let xi: Vec<f64> = xi.iter().map(|x| x * (1.0 + 0.5 * i as f64)).collect();
        let fit = hol_d_fit(
            |l| Ok(sigma.eval_components(&xi, Some(l))?[0].l2_norm()),
            &within,
            Some(&data.theta_p),
            &rays,
            &radii,
        )
        .map_err(|e| e.to_string())?;
        worst = worst.max((fit.pooled.exponent + 1.0).abs());
        exps.push(format!("{:.4}", fit.pooled.exponent));
    }
    verdict(worst <= 0.05, format!("pooled exponents [{}] (tol 0.05)", exps.join(", ")))
}

fn a7() -> Verdict {
    let th = theta2(0.25);
    let lab = ResolventLab::new(quantize(&laplacian(&th, 1.0), 14).unwrap()).unwrap();
    let r = lab.resolvent(c(-1.0, 0.0)).unwrap();
    let tail = schatten_tail(&r, 1.0).unwrap();
    let s = tail.fit.exponent;
    verdict((s + 1.0).abs() <= 0.1, format!("singular value slope {s:.4} over [{:.0}, {:.0}] (target -1 +- 0.1)", tail.fit.range.0, tail.fit.range.1))
}

fn band_error(a: &TruncatedOperator, b: &TruncatedOperator, lo: i64, hi: i64) -> f64 {
    let pos: Vec<usize> = (0..a.dim())
        .filter(|&p| {
            let s = lattice::sup_norm(&a.basis().point(p));
            s >= lo && s <= hi
        })
        .collect();
    linalg::spectral_norm(&a.sub(b).unwrap().restrict(&pos))
}

fn a8() -> Verdict {
    let th = theta2(0.25);
    let rho = laplacian(&th, 1.0);
    let depth = 4;
    let margin = default_margin(&rho, depth);
    let mut ok = true;
    let mut parts = Vec::new();
    for z in [c(-0.5, 0.0), c(-1.0, 0.0), c(0.5, 0.3)] {
        let op6 = quantize(&rho, 6).unwrap();
        let spec6 = power_spectral(&op6, z).unwrap();
        let opts = ContourOptions {
            order: 16,
            arc_panels: 32,
            ..ContourOptions::default()
        };
        let cont = power_contour(&op6, z, &opts).map_err(|e| format!("z={z}: {e}"))?;
        let route = linalg::spectral_norm(spec6.sub(&cont.op).unwrap().matrix());
        let ps = power_symbol(&rho, z, depth).unwrap();
        let mut errs = Vec::new();
        let mut bands = Vec::new();
        for n in [6usize, 12] {
            let spec = if n == 6 { spec6.clone() } else { power_spectral(&quantize(&rho, n).unwrap(), z).unwrap() };
            let q = quantize(&ps, n).unwrap();
            let pos = interior_projector(q.basis(), margin).unwrap();
            errs.push(linalg::spectral_norm(&spec.sub(&q).unwrap().restrict(&pos)));
            bands.push(band_error(&spec, &q, n as i64 / 2, n as i64));
        }
        let mut principal: f64 = 0.0;
        for (i, xi) in sphere_grid(2, 10).into_iter().enumerate() {
            let xi: Vec<f64> = xi.iter().map(|x| x * (1.0 + i as f64)).collect();
            let v = ps.eval_components(&xi).unwrap();
            let exact = ps.principal_power_exact(&xi).unwrap();
            principal = principal.max(v[0].sub(&exact).unwrap().max_abs());
        }
        let halves = errs[1] <= 0.5 * errs[0];
        ok &= route <= 1e-6 && halves && principal <= 1e-6;
        parts.push(format!(
            "z={z}: spectral-contour {route:.2e}, interior symbol error N=6 {:.3e} N=12 {:.3e} ({}), principal {principal:.2e}; high band |k|>=N/2 N=6 {:.3e} N=12 {:.3e}",
            errs[0],
            errs[1],
            if halves { "halves" } else { "does not halve" },
            bands[0],
            bands[1]
        ));
    }
    verdict(ok, parts.join("; "))
}

fn a9() -> Verdict {
    let th = theta2(0.25);
    let t = quantize(&laplacian(&th, 1.0), 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut group: f64 = 0.0;
    for _ in 0..5 {
        let z1 = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let z2 = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        group = group.max(group_property_check(&t, z1, z2).unwrap());
    }
    // P = (1 + 0.1 i) Delta + 0.3 U1 delta_2 + 0.2 U2^{-1}
    let mut terms = std::collections::BTreeMap::new();
    let a = NcElement::scalar(&th, c(1.0, 0.1));
    terms.insert(smallvec![2, 0], a.clone());
    terms.insert(smallvec![0, 2], a);
    terms.insert(smallvec![0, 1], NcElement::generator(&th, 0).scale(c(0.3, 0.0)));
    let u2inv: Index = smallvec![0, -1];
    terms.insert(smallvec![0, 0], NcElement::monomial(&th, u2inv, c(0.2, 0.0)));
    let p = ClassicalSymbol::differential(&th, &terms).unwrap();
    let abs = abs_value(&quantize(&p, 6).unwrap(), None).unwrap();
    verdict(
        group <= 1e-8 && abs.square_defect <= 1e-8,
        format!("group deviation {group:.3e}, || |P|^2 - P*P || {:.3e} (tol 1e-8)", abs.square_defect),
    )
}

fn a10() -> Verdict {
    let th = theta2(0.25);
    let cutoff = 8;
    let op = quantize(&laplacian(&th, 1.0), cutoff).unwrap();
    let id = TruncatedOperator::identity(&th, cutoff);
    let lab = ResolventLab::new(op).unwrap();
    let grid: Vec<Complex64> = geometric_grid(10.0, 1e4, 12).into_iter().map(|t| c(-t, 0.0)).collect();
    let chain = trace_chain(&[(id.clone(), 0.0), (id.clone(), 0.0), (id, 0.0)], &lab, 2.0, &grid).unwrap();
    // diagonal-sum oracle: sum_k (|k|^2 + 1 + t)^{-2} over the same box
    let n = cutoff as i64;
    let oracle: Vec<f64> = grid
        .iter()
        .map(|l| {
            let mut s = 0.0;
            for a in -n..=n {
                for b in -n..=n {
                    s += ((a * a + b * b) as f64 + 1.0 - l.re).powi(-2);
                }
            }
            s
        })
        .collect();
    let xs: Vec<f64> = grid.iter().map(|l| 1.0 + l.norm()).collect();
    let ofit = loglog_fit(&xs, &oracle).unwrap();
    let e = chain.fit.exponent;
    verdict(
        e <= -0.9 && (e - ofit.exponent).abs() <= 0.1,
        format!("trace exponent {e:.4} (need <= -0.9), oracle {:.4}, |diff| {:.2e} (tol 0.1)", ofit.exponent, (e - ofit.exponent).abs()),
    )
}

fn a11() -> Verdict {
    let phi = Interpolant::default();
    let cutoff = 8usize;
    let at0 = (phi.phi(&[0.0, 0.0]) - 1.0).abs();
    let mut lattice_max: f64 = 0.0;
    for k in LatticeBox::new(2, 2 * cutoff).points() {
        if lattice::sup_norm(&k) > 0 {
            lattice_max = lattice_max.max(phi.phi(&lattice::as_f64(&k)).abs());
        }
    }
    let mass = phi.integral_1d(160.0).powi(2);
    let th = theta2(1.0 / SQRT_2);
    let basis = LatticeBox::new(2, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut table = ToroidalSymbolTable::new(&th);
    for k in basis.points() {
        table.insert(k, random_element(&mut rng, &th, 2, 3));
    }
    let ext = table.extend(&phi);
    let mut restrict: f64 = 0.0;
    for k in basis.points() {
        let d = ext.eval(&lattice::as_f64(&k)).unwrap().sub(&table.value_at(&k).unwrap()).unwrap();
        restrict = restrict.max(d.max_abs());
    }
    verdict(
        at0 <= 1e-10 && lattice_max <= 1e-10 && (mass - 1.0).abs() <= 1e-6 && restrict <= 1e-12,
        format!(
            "|phi(0)-1| {at0:.2e}, max |phi(k)| {lattice_max:.2e} (|k| <= 16), |int phi - 1| {:.2e}, restrict {restrict:.2e}",
            (mass - 1.0).abs()
        ),
    )
}

fn a12() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut assoc, mut tr, mut leib, mut cocycle): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for case in 0..1000 {
        let th = if case % 2 == 0 {
            theta2(THETAS[case % 3])
        } else {
            let up: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Arc::new(ThetaMatrix::from_upper(3, &up).unwrap())
        };
        let a = random_element(&mut rng, &th, 3, 5);
        let b = random_element(&mut rng, &th, 3, 5);
        let cc = random_element(&mut rng, &th, 3, 5);
        let l = a.mul(&b).unwrap().mul(&cc).unwrap();
        let r = a.mul(&b.mul(&cc).unwrap()).unwrap();
        assoc = assoc.max(l.sub(&r).unwrap().l2_norm());
        tr = tr.max((a.mul(&b).unwrap().trace() - b.mul(&a).unwrap().trace()).norm());
        for j in 0..th.dim() {
            let lhs = a.mul(&b).unwrap().delta(j);
            let rhs = a.delta(j).mul(&b).unwrap().add(&a.mul(&b.delta(j)).unwrap()).unwrap();
            leib = leib.max(lhs.sub(&rhs).unwrap().l2_norm());
        }
        let n = th.dim();
        let idx = |rng: &mut ChaCha8Rng| -> Index { (0..n).map(|_| rng.gen_range(-6i64..=6)).collect() };
        let (k, l2, m) = (idx(&mut rng), idx(&mut rng), idx(&mut rng));
        let lhs = th.phase(&k, &l2) * th.phase(&lattice::add_index(&k, &l2), &m);
        let rhs = th.phase(&k, &lattice::add_index(&l2, &m)) * th.phase(&l2, &m);
        cocycle = cocycle.max((lhs - rhs).norm());
    }
    let worst = assoc.max(tr).max(leib).max(cocycle);
    verdict(
        worst <= 1e-12,
        format!("1000 cases: associativity {assoc:.2e}, trace {tr:.2e}, Leibniz {leib:.2e}, cocycle {cocycle:.2e} (tol 1e-12)"),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Verdict); 12] = [
        ("A1", "composition exactness", a1),
        ("A2", "adjoint exactness", a2),
        ("A3", "isospectrality", a3),
        ("A4", "parametrix fidelity", a4),
        ("A5", "minimal growth", a5),
        ("A6", "Hol^-1 of the principal parametric symbol", a6),
        ("A7", "Schatten tail", a7),
        ("A8", "complex powers three-way agreement", a8),
        ("A9", "group property and |P|", a9),
        ("A10", "trace-chain decay", a10),
        ("A11", "interpolant properties", a11),
        ("A12", "algebra laws", a12),
    ];
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, title, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| id == p) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("{id} PASS {title}: {d} [{secs:.1}s]"),
            Err(d) => {
                println!("{id} FAIL {title}: {d} [{secs:.1}s]");
                failed.push(id);
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
