//! Parameter domains, decay fits and contour quadrature.

mod cone;
mod fit;
mod quadrature;

pub use cone::{angular_distance, argument_clusters, lambda_p, normalize_from, sectors_avoiding, PseudoCone, CLUSTER_GAP, RAY_GUARD};
pub use fit::{geometric_grid, hol_d_fit, loglog_fit, DecayFit, HolFit, RESIDUAL_FLAG};
pub use quadrature::{contour_quadrature, Contour, ContourValue, QuadratureResult, QuadratureSpec};

/// Deterministic points on the unit sphere of R^n.
///
/// n = 1 gives {-1, 1}; n = 2 gives equally spaced angles; higher n uses a
/// generalized spiral (golden-ratio lattice mapped through normalized coordinates).
pub fn sphere_grid(n: usize, count: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::TAU;
    match n {
        0 => Vec::new(),
        1 => vec![vec![-1.0], vec![1.0]],
        2 => (0..count)
            .map(|j| {
                let a = TAU * j as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            // Kronecker sequence in [0,1)^n pushed through an inverse-normal-free map:
            // coordinates cos/sin pairs of angles, then normalized.
            let alphas: Vec<f64> = (0..n).map(|j| (((j + 2) as f64).sqrt()).fract()).collect();
            (0..count)
                .map(|i| {
                    let mut v: Vec<f64> = alphas
                        .iter()
                        .enumerate()
                        .map(|(j, a)| {
                            let u = ((i + 1) as f64 * a).fract();
                            (TAU * u + j as f64).sin()
                        })
                        .collect();
                    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    v.iter_mut().for_each(|x| *x /= r);
                    v
                })
                .collect()
        }
    }
}
