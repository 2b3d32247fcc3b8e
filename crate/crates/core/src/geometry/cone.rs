use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default angular guard around excluded rays (radians).
pub const RAY_GUARD: f64 = 1e-3;

/// Gap below which spectral arguments are merged into one cluster (radians).
pub const CLUSTER_GAP: f64 = 0.1;

/// A pseudo-cone: a union of closed angular sectors and a disk about the origin,
/// minus excluded rays and small excluded disks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoCone {
    /// Angular intervals (lo, hi) with lo < hi and hi - lo <= 2 pi.
    pub sectors: Vec<(f64, f64)>,
    /// Radius of the disk |lambda| < r included in the set; 0 for none.
    pub disk_radius: f64,
    pub include_origin: bool,
    /// Arguments of rays removed from the sectors.
    pub excluded_rays: Vec<f64>,
    /// Small disks removed from the set, as (center, radius).
    pub excluded_points: Vec<(Complex64, f64)>,
    pub guard: f64,
    /// Whether sector boundary rays belong to the set.
    pub closed: bool,
}

impl PseudoCone {
    pub fn sectors(sectors: Vec<(f64, f64)>) -> Result<Self> {
        for &(lo, hi) in &sectors {
            if !(lo < hi && hi - lo <= TAU + 1e-15) {
                return Err(Error::Precondition(format!("invalid sector ({lo}, {hi})")));
            }
        }
        Ok(PseudoCone {
            sectors,
            disk_radius: 0.0,
            include_origin: false,
            excluded_rays: Vec::new(),
            excluded_points: Vec::new(),
            guard: RAY_GUARD,
            closed: true,
        })
    }

    /// The closed sector of arguments in [lo, hi].
    pub fn sector(lo: f64, hi: f64) -> Result<Self> {
        Self::sectors(vec![(lo, hi)])
    }

    /// Lambda(r) = {Re lambda <= 0} union {|lambda| <= r}.
    pub fn left_half_plane_with_disk(r: f64) -> Self {
        PseudoCone {
            sectors: vec![(PI / 2.0, 3.0 * PI / 2.0)],
            disk_radius: r,
            include_origin: true,
            excluded_rays: Vec::new(),
            excluded_points: Vec::new(),
            guard: RAY_GUARD,
            closed: true,
        }
    }

    /// C minus the closed ray [0, inf).
    pub fn slit_plane() -> Self {
        PseudoCone {
            sectors: vec![(0.0, TAU)],
            disk_radius: 0.0,
            include_origin: false,
            excluded_rays: Vec::new(),
            excluded_points: Vec::new(),
            guard: RAY_GUARD,
            closed: false,
        }
    }

    pub fn with_disk(mut self, r: f64) -> Self {
        self.disk_radius = r;
        self
    }

    pub fn contains_angle(&self, phi: f64) -> bool {
        self.sectors.iter().any(|&(lo, hi)| {
            let a = normalize_from(phi, lo);
            if self.closed {
                a <= hi + 1e-15
            } else {
                a > lo && a < hi
            }
        }) && !self
            .excluded_rays
            .iter()
            .any(|&r| angular_distance(phi, r) < self.guard)
    }

    pub fn contains(&self, lambda: Complex64) -> bool {
        if lambda.norm() == 0.0 {
            return self.include_origin;
        }
        if self
            .excluded_points
            .iter()
            .any(|&(p, rad)| (lambda - p).norm() < rad)
        {
            return false;
        }
        if lambda.norm() < self.disk_radius {
            return true;
        }
        self.contains_angle(lambda.arg())
    }

    /// Whether self is compactly contained in `other` within C*: every sector of self
    /// sits in the interior of a sector of other, away from other's excluded rays.
    pub fn compactly_inside(&self, other: &PseudoCone) -> bool {
        self.sectors.iter().all(|&(lo, hi)| {
            let inside = other.sectors.iter().any(|&(olo, ohi)| {
                let a = normalize_from(lo, olo);
                let b = a + (hi - lo);
                a > olo && b < ohi
            });
            let clear = other.excluded_rays.iter().all(|&r| {
                let a = normalize_from(r, lo);
                !(a <= hi + other.guard || a >= lo + TAU - other.guard)
            });
            inside && clear
        })
    }
}

/// The parameter domain Lambda(P): Theta(P) minus the rays through eigenvalues, glued to
/// the disk of radius R0 = min{|mu| : mu in Sp, mu != 0}; the origin is removed when it
/// is an eigenvalue. With no nonzero eigenvalue the disk radius is `max_radius`.
pub fn lambda_p(spectrum: &[Complex64], theta_p: &PseudoCone, zero_tol: f64, max_radius: f64) -> Result<PseudoCone> {
    if theta_p.sectors.is_empty() {
        return Err(Error::NotEllipticWithParameter(
            "Theta(P) is empty".into(),
        ));
    }
    let mut out = theta_p.clone();
    let mut r0 = max_radius;
    let mut has_zero = false;
    for &mu in spectrum {
        if mu.norm() <= zero_tol {
            has_zero = true;
            continue;
        }
        r0 = r0.min(mu.norm());
        if theta_p.contains_angle(mu.arg()) {
            out.excluded_rays.push(mu.arg());
        }
    }
    out.excluded_rays.sort_by(f64::total_cmp);
    out.excluded_rays.dedup_by(|a, b| angular_distance(*a, *b) < theta_p.guard);
    out.disk_radius = r0;
    out.include_origin = !has_zero;
    Ok(out)
}

/// Shifts phi by multiples of 2 pi into [lo, lo + 2 pi).
pub fn normalize_from(phi: f64, lo: f64) -> f64 {
    lo + (phi - lo).rem_euclid(TAU)
}

pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Clusters of arguments on the circle, as arcs (start, end) with end >= start.
/// Arguments closer than `gap` are merged.
pub fn argument_clusters(args: &[f64], gap: f64) -> Vec<(f64, f64)> {
    if args.is_empty() {
        return Vec::new();
    }
    let mut a: Vec<f64> = args.iter().map(|x| x.rem_euclid(TAU)).collect();
    a.sort_by(f64::total_cmp);
    // start after the widest gap so that no cluster wraps the cut
    let m = a.len();
    let mut widest = 0;
    let mut best = -1.0;
    for i in 0..m {
        let next = if i + 1 < m { a[i + 1] } else { a[0] + TAU };
        let g = next - a[i];
        if g > best {
            best = g;
            widest = i;
        }
    }
    if best < gap {
        return vec![(0.0, TAU)];
    }
    let start = (widest + 1) % m;
    let mut seq: Vec<f64> = Vec::with_capacity(m);
    for i in 0..m {
        let idx = (start + i) % m;
        let v = if idx < start { a[idx] + TAU } else { a[idx] };
        seq.push(v);
    }
    let mut clusters = Vec::new();
    let mut lo = seq[0];
    let mut hi = seq[0];
    for &v in &seq[1..] {
        if v - hi < gap {
            hi = v;
        } else {
            clusters.push((lo, hi));
            lo = v;
            hi = v;
        }
    }
    clusters.push((lo, hi));
    clusters
}

/// Complement of the expanded argument clusters of a spectral cloud.
///
/// Each cluster is widened by `expand` times its width (and at least the ray guard)
/// on each side. An empty result means the cloud surrounds the origin.
pub fn sectors_avoiding(cloud: &[Complex64], gap: f64, expand: f64) -> Vec<(f64, f64)> {
    let args: Vec<f64> = cloud
        .iter()
        .filter(|z| z.norm() > 1e-14)
        .map(|z| z.arg())
        .collect();
    if args.is_empty() {
        return vec![(0.0, TAU)];
    }
    let clusters = argument_clusters(&args, gap);
    if clusters.len() == 1 && clusters[0] == (0.0, TAU) {
        return Vec::new();
    }
    let widened: Vec<(f64, f64)> = clusters
        .iter()
        .map(|&(lo, hi)| {
            let pad = (expand * (hi - lo)).max(RAY_GUARD);
            (lo - pad, hi + pad)
        })
        .collect();
    let k = widened.len();
    let mut sectors = Vec::new();
    for i in 0..k {
        let end = widened[i].1;
        let next = if i + 1 < k { widened[i + 1].0 } else { widened[0].0 + TAU };
        if next > end {
            sectors.push((end, next));
        }
    }
    sectors
}
