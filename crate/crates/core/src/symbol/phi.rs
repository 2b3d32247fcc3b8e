use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gauss;

/// Schwartz interpolant phi(xi) = prod_j phi1(xi_j) with phi(0) = 1 and phi(k) = 0
/// for k in Z^n \ {0}.
///
/// phi1 is the inverse Fourier transform of a smooth even bump psi equal to 1 on
/// [-(pi - delta), pi - delta] and vanishing outside [-(pi + delta), pi + delta],
/// with psi(t) + psi(t - 2 pi) = 1 on the overlap.
#[derive(Clone, Debug)]
pub struct Interpolant {
    delta: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

const PANELS: usize = 32;
const ORDER: usize = 16;

impl Interpolant {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < PI) {
            return Err(Error::Precondition(format!("transition half-width {delta} must lie in (0, pi)")));
        }
        let (nodes, raw) = gauss::composite(PI - delta, PI + delta, PANELS, ORDER);
        let weights = nodes
            .iter()
            .zip(&raw)
            .map(|(&t, &w)| w * Self::psi_with(delta, t))
            .collect();
        let interp = Interpolant { delta, nodes, weights };
        interp.validate(1e-12)?;
        Ok(interp)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn step(delta: f64, x: f64) -> f64 {
        fn f(y: f64) -> f64 {
            if y > 0.0 {
                (-1.0 / y).exp()
            } else {
                0.0
            }
        }
        let a = f(delta + x);
        let b = f(delta - x);
        if a + b == 0.0 {
            return if x > 0.0 { 1.0 } else { 0.0 };
        }
        a / (a + b)
    }

    fn psi_with(delta: f64, t: f64) -> f64 {
        let t = t.abs();
        1.0 - Self::step(delta, t - PI)
    }

    /// The Fourier-side profile psi.
    pub fn psi(&self, t: f64) -> f64 {
        Self::psi_with(self.delta, t)
    }

    pub fn phi1(&self, x: f64) -> f64 {
        let plateau = PI - self.delta;
        let head = if x.abs() < 1e-12 {
            plateau
        } else {
            (plateau * x).sin() / x
        };
        let tail: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * (x * t).cos())
            .sum();
        (head + tail) / PI
    }

    pub fn phi(&self, xi: &[f64]) -> f64 {
        xi.iter().map(|&x| self.phi1(x)).product()
    }

    /// Composite Gauss-Legendre value of the integral of phi1 over [-half_width, half_width].
    /// The integral of phi over R^n is this value to the n-th power.
    pub fn integral_1d(&self, half_width: f64) -> f64 {
        let panels = (half_width.ceil() as usize).max(1) * 2;
        let (x, w) = gauss::composite(-half_width, half_width, panels, ORDER);
        x.iter().zip(&w).map(|(&x, &w)| w * self.phi1(x)).sum()
    }

    fn validate(&self, tol: f64) -> Result<()> {
        let at0 = self.phi1(0.0);
        if (at0 - 1.0).abs() > tol {
            return Err(Error::Interpolant {
                point: vec![0],
                value: at0 - 1.0,
            });
        }
        for k in 1..=64i64 {
            let v = self.phi1(k as f64);
            if v.abs() > tol {
                return Err(Error::Interpolant { point: vec![k], value: v });
            }
        }
        Ok(())
    }
}

impl Default for Interpolant {
    fn default() -> Self {
        Interpolant::new(PI / 2.0).expect("default transition width is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_lattice() {
        let p = Interpolant::default();
        assert!((p.phi(&[0.0, 0.0]) - 1.0).abs() < 1e-14);
        for k in [[1.0, 0.0], [0.0, -3.0], [5.0, 7.0]] {
            assert!(p.phi(&k).abs() < 1e-14);
        }
        assert!(p.phi(&[0.5, 0.0]).abs() > 0.1);
    }

    #[test]
    fn partition_of_unity_on_fourier_side() {
        let p = Interpolant::default();
        for t in [2.0, 2.5, 3.0, PI, 3.5, 4.5] {
            assert!((p.psi(t) + p.psi(t - 2.0 * PI) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_mass() {
        let p = Interpolant::default();
        assert!((p.integral_1d(160.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_width() {
        assert!(Interpolant::new(0.0).is_err());
        assert!(Interpolant::new(4.0).is_err());
    }
}
