use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PseudoCone;
use crate::error::{Error, Result};

/// Least-squares line through (log x, log y).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// Range of x used.
    pub range: (f64, f64),
    pub samples: usize,
    /// Residual above `RESIDUAL_FLAG`.
    pub flagged: bool,
}

/// Log-space RMS residual above which a fit is flagged as unreliable.
pub const RESIDUAL_FLAG: f64 = 0.05;

impl DecayFit {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.exponent * x.ln()).exp()
    }
}

pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::FitWindow { size: pts.len() });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::FitWindow { size: 1 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayFit {
        exponent: slope,
        intercept,
        residual,
        range: (lo, hi),
        samples: pts.len(),
        flagged: residual > RESIDUAL_FLAG,
    })
}

/// Decay exponent of |lambda| -> f(lambda) along rays of a sub-cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolFit {
    pub pooled: DecayFit,
    /// (ray argument, per-ray fit)
    pub per_ray: Vec<(f64, DecayFit)>,
    /// max - min of the per-ray exponents.
    pub spread: f64,
    pub non_uniform: bool,
}

impl HolFit {
    /// One row per ray: "ray,exponent,residual,flagged", then the pooled fit.
    pub fn csv(&self) -> String {
        let mut s = String::from("ray,exponent,residual,flagged\n");
        for (phi, f) in &self.per_ray {
            s.push_str(&format!("{phi:.17e},{:.17e},{:.17e},{}\n", f.exponent, f.residual, f.flagged));
        }
        s.push_str(&format!(
            "pooled,{:.17e},{:.17e},{}\n",
            self.pooled.exponent, self.pooled.residual, self.pooled.flagged
        ));
        s
    }
}

/// Fits log f(t e^{i phi}) against log(1 + t) on every ray and pooled.
///
/// When `domain` is given, `within` must be compactly contained in it. Every sample
/// must lie in `within`. Any failing evaluation fails the whole fit.
pub fn hol_d_fit<F>(
    f: F,
    within: &PseudoCone,
    domain: Option<&PseudoCone>,
    rays: &[f64],
    radii: &[f64],
) -> Result<HolFit>
where
    F: Fn(Complex64) -> Result<f64> + Sync,
{
    if let Some(d) = domain {
        if !within.compactly_inside(d) {
            return Err(Error::Precondition(
                "fit cone is not compactly contained in the parameter domain".into(),
            ));
        }
    }
    let samples: Vec<Complex64> = rays
        .iter()
        .flat_map(|&phi| radii.iter().map(move |&t| Complex64::from_polar(t, phi)))
        .collect();
    if let Some(out) = samples.iter().find(|l| !within.contains(**l)) {
        return Err(Error::OutsideDomain(*out));
    }
    let values: Vec<Result<f64>> = samples.par_iter().map(|&l| f(l)).collect();
    let failures: Vec<(Complex64, String)> = samples
        .iter()
        .zip(&values)
        .filter_map(|(l, v)| v.as_ref().err().map(|e| (*l, e.to_string())))
        .collect();
    if let Some((first_lambda, first_error)) = failures.first().cloned() {
        return Err(Error::PartialFit {
            failures: failures.len(),
            total: samples.len(),
            first_lambda,
            first_error,
        });
    }
    let values: Vec<f64> = values.into_iter().map(|v| v.unwrap()).collect();
    let xs: Vec<f64> = samples.iter().map(|l| 1.0 + l.norm()).collect();
    let pooled = loglog_fit(&xs, &values)?;
    let m = radii.len();
    let mut per_ray = Vec::with_capacity(rays.len());
    for (i, &phi) in rays.iter().enumerate() {
        let fit = loglog_fit(&xs[i * m..(i + 1) * m], &values[i * m..(i + 1) * m])?;
        per_ray.push((phi, fit));
    }
    let lo = per_ray.iter().map(|r| r.1.exponent).fold(f64::INFINITY, f64::min);
    let hi = per_ray.iter().map(|r| r.1.exponent).fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    let non_uniform = spread > 2.0 * pooled.residual + 0.01;
    Ok(HolFit {
        pooled,
        per_ray,
        spread,
        non_uniform,
    })
}

/// Geometric grid of `count` points from a to b.
pub fn geometric_grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    let r = (b / a).ln() / (count - 1) as f64;
    (0..count).map(|i| a * (r * i as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exact_power_law() {
        let xs = geometric_grid(1.0, 100.0, 10);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.5)).collect();
        let f = loglog_fit(&xs, &ys).unwrap();
        assert!((f.exponent + 1.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(loglog_fit(&xs[..2], &ys[..2]).is_err());
    }

    #[test]
    fn resolvent_of_scalar_decays_like_inverse() {
        let cone = PseudoCone::sector(PI / 2.0, 3.0 * PI / 2.0).unwrap();
        let domain = PseudoCone::slit_plane();
        let radii = geometric_grid(10.0, 1e4, 12);
        let fit = hol_d_fit(
            |l| Ok(1.0 / (Complex64::new(1.0, 0.0) - l).norm()),
            &cone,
            Some(&domain),
            &[PI / 2.0, 3.0 * PI / 4.0, PI],
            &radii,
        )
        .unwrap();
        assert!((fit.pooled.exponent + 1.0).abs() < 0.02);
        assert!(!fit.non_uniform);
    }

    #[test]
    fn recovers_bracket_powers() {
        let cone = PseudoCone::sector(PI / 2.0, 3.0 * PI / 2.0).unwrap();
        let radii = geometric_grid(1.0, 1e4, 20);
        for d in [-3.0, -2.0, -1.0, 0.0, 1.0] {
            let fit = hol_d_fit(|l| Ok((1.0 + l.norm()).powf(d)), &cone, None, &[PI, 3.0 * PI / 4.0], &radii).unwrap();
            assert!((fit.pooled.exponent - d).abs() < 0.02, "d = {d}");
        }
    }

    #[test]
    fn failures_are_reported() {
        let cone = PseudoCone::sector(PI / 2.0, 3.0 * PI / 2.0).unwrap();
        let r = hol_d_fit(
            |l| {
                if l.norm() > 50.0 {
                    Err(Error::NotInvertible { condition: 1e20 })
                } else {
                    Ok(1.0)
                }
            },
            &cone,
            None,
            &[PI],
            &[1.0, 10.0, 100.0],
        );
        assert!(matches!(r, Err(Error::PartialFit { failures: 1, total: 3, .. })));
    }
}
