//! Lattice points, multi-indices and truncation boxes.

use smallvec::{smallvec, SmallVec};

/// A point of Z^n.
pub type Index = SmallVec<[i64; 4]>;
/// A multi-index in N^n.
pub type MultiIndex = SmallVec<[u32; 4]>;

pub fn zero_index(n: usize) -> Index {
    smallvec![0; n]
}

pub fn unit_index(n: usize, j: usize) -> Index {
    let mut k = zero_index(n);
    k[j] = 1;
    k
}

pub fn add_index(a: &[i64], b: &[i64]) -> Index {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub_index(a: &[i64], b: &[i64]) -> Index {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn neg_index(a: &[i64]) -> Index {
    a.iter().map(|x| -x).collect()
}

pub fn sup_norm(k: &[i64]) -> i64 {
    k.iter().map(|x| x.abs()).max().unwrap_or(0)
}

pub fn euclid_norm(k: &[i64]) -> f64 {
    k.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt()
}

pub fn as_f64(k: &[i64]) -> Vec<f64> {
    k.iter().map(|&x| x as f64).collect()
}

pub fn order(alpha: &[u32]) -> u32 {
    alpha.iter().sum()
}

pub fn factorial(alpha: &[u32]) -> f64 {
    alpha
        .iter()
        .map(|&a| (1..=a).map(f64::from).product::<f64>())
        .product()
}

/// All multi-indices of length `n` with |alpha| = `s`, in lexicographic order.
pub fn multi_indices(n: usize, s: u32) -> Vec<MultiIndex> {
    fn rec(n: usize, s: u32, prefix: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == n {
            prefix.push(s);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in (0..=s).rev() {
            prefix.push(a);
            rec(n, s - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        if s == 0 {
            out.push(MultiIndex::new());
        }
        return out;
    }
    rec(n, s, &mut MultiIndex::new(), &mut out);
    out
}

pub fn binomial_multi(alpha: &[u32], gamma: &[u32]) -> f64 {
    alpha
        .iter()
        .zip(gamma)
        .map(|(&a, &g)| binomial(a, g))
        .product()
}

pub fn binomial(a: u32, g: u32) -> f64 {
    if g > a {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..g {
        r = r * f64::from(a - i) / f64::from(i + 1);
    }
    r
}

/// Sub-multi-indices gamma <= alpha.
pub fn below(alpha: &[u32]) -> Vec<MultiIndex> {
    let mut out: Vec<MultiIndex> = vec![MultiIndex::new()];
    for &a in alpha {
        let mut next = Vec::with_capacity(out.len() * (a as usize + 1));
        for p in &out {
            for g in 0..=a {
                let mut q = p.clone();
                q.push(g);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// The box |k|_inf <= cutoff, optionally restricted to a coordinate subspace.
///
/// Points are enumerated lexicographically, first coordinate most significant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeBox {
    n: usize,
    cutoff: usize,
    active: SmallVec<[bool; 4]>,
}

impl LatticeBox {
    pub fn new(n: usize, cutoff: usize) -> Self {
        LatticeBox {
            n,
            cutoff,
            active: smallvec![true; n],
        }
    }

    /// Box restricted to the axes marked active; other coordinates are pinned to zero.
    pub fn restricted(n: usize, cutoff: usize, active: &[bool]) -> Self {
        assert_eq!(active.len(), n);
        LatticeBox {
            n,
            cutoff,
            active: active.iter().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn is_full(&self) -> bool {
        self.active.iter().all(|&a| a)
    }

    pub fn len(&self) -> usize {
        let side = 2 * self.cutoff + 1;
        self.active.iter().filter(|&&a| a).fold(1, |acc, _| acc * side)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn position(&self, k: &[i64]) -> Option<usize> {
        let c = self.cutoff as i64;
        let side = 2 * c + 1;
        let mut pos: i64 = 0;
        for (j, &kj) in k.iter().enumerate() {
            if self.active[j] {
                if kj.abs() > c {
                    return None;
                }
                pos = pos * side + (kj + c);
            } else if kj != 0 {
                return None;
            }
        }
        Some(pos as usize)
    }

    pub fn point(&self, mut pos: usize) -> Index {
        let c = self.cutoff as i64;
        let side = 2 * self.cutoff + 1;
        let mut k = zero_index(self.n);
        for j in (0..self.n).rev() {
            if self.active[j] {
                k[j] = (pos % side) as i64 - c;
                pos /= side;
            }
        }
        k
    }

    pub fn points(&self) -> Vec<Index> {
        (0..self.len()).map(|p| self.point(p)).collect()
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        self.position(k).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_roundtrip() {
        let b = LatticeBox::new(3, 2);
        assert_eq!(b.len(), 125);
        for p in 0..b.len() {
            assert_eq!(b.position(&b.point(p)), Some(p));
        }
        assert_eq!(b.point(0).as_slice(), &[-2, -2, -2]);
        assert_eq!(b.point(1).as_slice(), &[-2, -2, -1]);
    }

    #[test]
    fn restricted_box() {
        let b = LatticeBox::restricted(2, 3, &[true, false]);
        assert_eq!(b.len(), 7);
        assert_eq!(b.position(&[1, 0]), Some(4));
        assert_eq!(b.position(&[1, 1]), None);
        assert_eq!(b.point(6).as_slice(), &[3, 0]);
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(2, 3).len(), 4);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert_eq!(multi_indices(1, 0).len(), 1);
        assert_eq!(below(&[2, 1]).len(), 6);
        assert_eq!(factorial(&[3, 2]), 12.0);
        assert_eq!(binomial(5, 2), 10.0);
    }
}
