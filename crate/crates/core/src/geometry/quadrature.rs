use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::NcElement;
use crate::error::{Error, Result};
use crate::gauss;

/// Values that can be integrated along a contour.
pub trait ContourValue: Clone + Send + Sync {
    fn zero_like(&self) -> Self;
    fn axpy(&mut self, c: Complex64, other: &Self);
    fn norm(&self) -> f64;
    fn distance(&self, other: &Self) -> f64;
}

impl ContourValue for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn axpy(&mut self, c: Complex64, other: &Self) {
        *self += c * other;
    }
    fn norm(&self) -> f64 {
        Complex64::norm(*self)
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
}

impl ContourValue for DMatrix<Complex64> {
    fn zero_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn axpy(&mut self, c: Complex64, other: &Self) {
        self.zip_apply(other, |a, b| *a += c * b);
    }
    fn norm(&self) -> f64 {
        crate::linalg::frobenius(self)
    }
    fn distance(&self, other: &Self) -> f64 {
        crate::linalg::frobenius(&(self - other))
    }
}

impl ContourValue for NcElement {
    fn zero_like(&self) -> Self {
        NcElement::zero(self.theta())
    }
    fn axpy(&mut self, c: Complex64, other: &Self) {
        NcElement::axpy(self, c, other).expect("contour values share one theta");
    }
    fn norm(&self) -> f64 {
        self.l2_norm()
    }
    fn distance(&self, other: &Self) -> f64 {
        self.sub(other).map(|d| d.l2_norm()).unwrap_or(f64::INFINITY)
    }
}

impl<T: ContourValue> ContourValue for Vec<T> {
    fn zero_like(&self) -> Self {
        self.iter().map(|v| v.zero_like()).collect()
    }
    fn axpy(&mut self, c: Complex64, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.axpy(c, b);
        }
    }
    fn norm(&self) -> f64 {
        self.iter().map(|v| v.norm().powi(2)).sum::<f64>().sqrt()
    }
    fn distance(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other)
            .map(|(a, b)| a.distance(b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contour {
    /// Incoming ray t e^{i phi_in} for t from t_max down to r, the arc of radius r
    /// clockwise from phi_in to phi_out, and the outgoing ray t e^{i phi_out} out to
    /// t_max. With phi_in = pi/2 and phi_out = -pi/2 this is the downward boundary of
    /// {Re lambda <= 0} union {|lambda| <= r}; points with Re lambda > 0 outside the
    /// disk lie to its left.
    Keyhole {
        radius: f64,
        phi_in: f64,
        phi_out: f64,
        t_max: f64,
    },
    Circle {
        center: Complex64,
        radius: f64,
        clockwise: bool,
    },
}

impl Contour {
    /// The downward boundary of {Re lambda <= 0} union {|lambda| <= r}, truncated at 1e6 r.
    pub fn keyhole(radius: f64) -> Contour {
        Contour::Keyhole {
            radius,
            phi_in: PI / 2.0,
            phi_out: -PI / 2.0,
            t_max: 1e6 * radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub contour: Contour,
    /// Gauss-Legendre order per panel.
    pub order: usize,
    /// Uniform panels on arcs and circles.
    pub arc_panels: usize,
    /// Ratio of consecutive panel endpoints on rays.
    pub ray_ratio: f64,
}

impl QuadratureSpec {
    pub fn new(contour: Contour) -> Self {
        QuadratureSpec {
            contour,
            order: 8,
            arc_panels: 16,
            ray_ratio: 1.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuadratureResult<V> {
    /// (1 / 2 pi i) times the contour integral.
    pub value: V,
    /// ||fine - coarse|| plus the tail bound, on the same scale as `value`.
    pub error_estimate: f64,
    pub tail_bound: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug)]
enum Panel {
    /// lambda = t e^{i phi}, t from a to b (either direction).
    Ray { phi: f64, a: f64, b: f64 },
    /// lambda = center + r e^{i s}, s from a to b.
    Arc { center: Complex64, r: f64, a: f64, b: f64 },
}

impl Panel {
    fn merge(&self, other: &Panel) -> Panel {
        match (*self, *other) {
            (Panel::Ray { phi, a, .. }, Panel::Ray { b, .. }) => Panel::Ray { phi, a, b },
            (Panel::Arc { center, r, a, .. }, Panel::Arc { b, .. }) => Panel::Arc { center, r, a, b },
            _ => unreachable!("panels are merged within one piece"),
        }
    }

    fn nodes(&self, x: &[f64], w: &[f64], out: &mut Vec<(Complex64, Complex64)>) {
        match *self {
            Panel::Ray { phi, a, b } => {
                let dir = Complex64::from_polar(1.0, phi);
                let h = 0.5 * (b - a);
                for (xi, wi) in x.iter().zip(w) {
                    let t = a + h * (xi + 1.0);
                    out.push((dir * t, dir * (h * wi)));
                }
            }
            Panel::Arc { center, r, a, b } => {
                let h = 0.5 * (b - a);
                for (xi, wi) in x.iter().zip(w) {
                    let s = a + h * (xi + 1.0);
                    let e = Complex64::from_polar(r, s);
                    out.push((center + e, Complex64::i() * e * (h * wi)));
                }
            }
        }
    }
}

fn ray_breaks(r: f64, t_max: f64, ratio: f64) -> Vec<f64> {
    let mut b = vec![r];
    let mut t = r;
    while t < t_max {
        t = (t * ratio).min(t_max);
        b.push(t);
    }
    b
}

/// Pieces of the contour, each a list of consecutive panels.
fn pieces(spec: &QuadratureSpec) -> Result<Vec<Vec<Panel>>> {
    match spec.contour {
        Contour::Keyhole {
            radius,
            phi_in,
            phi_out,
            t_max,
        } => {
            if !(radius > 0.0 && t_max > radius && phi_in > phi_out && phi_in - phi_out < TAU) {
                return Err(Error::Precondition("degenerate keyhole contour".into()));
            }
            let breaks = ray_breaks(radius, t_max, spec.ray_ratio);
            let incoming: Vec<Panel> = breaks
                .windows(2)
                .rev()
                .map(|w| Panel::Ray {
                    phi: phi_in,
                    a: w[1],
                    b: w[0],
                })
                .collect();
            let m = spec.arc_panels;
            let arc: Vec<Panel> = (0..m)
                .map(|i| {
                    let s0 = phi_in + (phi_out - phi_in) * i as f64 / m as f64;
                    let s1 = phi_in + (phi_out - phi_in) * (i + 1) as f64 / m as f64;
                    Panel::Arc {
                        center: Complex64::new(0.0, 0.0),
                        r: radius,
                        a: s0,
                        b: s1,
                    }
                })
                .collect();
            let outgoing: Vec<Panel> = breaks
                .windows(2)
                .map(|w| Panel::Ray {
                    phi: phi_out,
                    a: w[0],
                    b: w[1],
                })
                .collect();
            Ok(vec![incoming, arc, outgoing])
        }
        Contour::Circle {
            center,
            radius,
            clockwise,
        } => {
            if radius <= 0.0 {
                return Err(Error::Precondition("circle radius must be positive".into()));
            }
            let sweep = if clockwise { -TAU } else { TAU };
            let m = spec.arc_panels;
            Ok(vec![(0..m)
                .map(|i| Panel::Arc {
                    center,
                    r: radius,
                    a: sweep * i as f64 / m as f64,
                    b: sweep * (i + 1) as f64 / m as f64,
                })
                .collect()])
        }
    }
}

fn coarsen(piece: &[Panel]) -> Vec<Panel> {
    piece
        .chunks(2)
        .map(|c| if c.len() == 2 { c[0].merge(&c[1]) } else { c[0] })
        .collect()
}

/// (1 / 2 pi i) * integral of f over the contour by composite Gauss-Legendre.
///
/// The error estimate compares against the rule on pairwise-merged panels. For a
/// keyhole, `tail_exponent` a bounds ||f(lambda)|| <~ |lambda|^a beyond t_max and must
/// satisfy a < -1; the tail bound ||f(t_max e^{i phi})|| t_max / |a + 1| per ray is
/// added to the estimate.
pub fn contour_quadrature<V, F>(spec: &QuadratureSpec, f: F, tail_exponent: Option<f64>) -> Result<QuadratureResult<V>>
where
    V: ContourValue,
    F: Fn(Complex64) -> Result<V> + Sync,
{
    let keyhole = match spec.contour {
        Contour::Keyhole { phi_in, phi_out, t_max, .. } => Some((phi_in, phi_out, t_max)),
        Contour::Circle { .. } => None,
    };
    if keyhole.is_some() {
        match tail_exponent {
            Some(a) if a < -1.0 => {}
            Some(a) => return Err(Error::Divergent { exponent: a }),
            None => {
                return Err(Error::Precondition(
                    "a keyhole contour needs a tail exponent".into(),
                ))
            }
        }
    }
    let (x, w) = gauss::gauss_legendre(spec.order);
    let pieces = pieces(spec)?;
    let mut fine = Vec::new();
    let mut coarse = Vec::new();
    for piece in &pieces {
        for p in piece {
            p.nodes(&x, &w, &mut fine);
        }
        for p in coarsen(piece) {
            p.nodes(&x, &w, &mut coarse);
        }
    }
    let mut points: Vec<Complex64> = fine.iter().chain(&coarse).map(|p| p.0).collect();
    let tail_points = match keyhole {
        Some((phi_in, phi_out, t_max)) => vec![
            Complex64::from_polar(t_max, phi_in),
            Complex64::from_polar(t_max, phi_out),
        ],
        None => Vec::new(),
    };
    points.extend(&tail_points);
    let values: Vec<V> = points.par_iter().map(|&l| f(l)).collect::<Result<_>>()?;
    let scale = Complex64::new(0.0, -1.0 / TAU);
    let sum = |nodes: &[(Complex64, Complex64)], vals: &[V]| -> V {
        let mut acc = vals[0].zero_like();
        for ((_, dw), v) in nodes.iter().zip(vals) {
            acc.axpy(dw * scale, v);
        }
        acc
    };
    let nf = fine.len();
    let nc = coarse.len();
    let value = sum(&fine, &values[..nf]);
    let rough = sum(&coarse, &values[nf..nf + nc]);
    let mut tail_bound = 0.0;
    if let (Some((_, _, t_max)), Some(a)) = (keyhole, tail_exponent) {
        for v in &values[nf + nc..] {
            tail_bound += v.norm() * t_max / (a + 1.0).abs() / TAU;
        }
    }
    let error_estimate = value.distance(&rough) + tail_bound;
    Ok(QuadratureResult {
        value,
        error_estimate,
        tail_bound,
        evaluations: points.len(),
    })
}
