use serde::{Deserialize, Serialize};

/// Excision near the origin: chi = 1 on |xi| <= radius, chi = 0 on |xi| >= radius + width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cutoff {
    #[default]
    None,
    Smooth { radius: f64, width: f64 },
}

/// Smooth monotone step from 0 (x <= 0) to 1 (x >= 1).
pub fn smooth_step(x: f64) -> f64 {
    fn f(y: f64) -> f64 {
        if y > 0.0 {
            (-1.0 / y).exp()
        } else {
            0.0
        }
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    f(x) / (f(x) + f(1.0 - x))
}

impl Cutoff {
    pub fn chi(&self, xi_norm: f64) -> f64 {
        match *self {
            Cutoff::None => 0.0,
            Cutoff::Smooth { radius, width } => 1.0 - smooth_step((xi_norm - radius) / width),
        }
    }

    /// The factor (1 - chi) applied to the expansion.
    pub fn weight(&self, xi: &[f64]) -> f64 {
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        1.0 - self.chi(r)
    }

    /// Combined excision for products: the larger of the two supports.
    pub fn join(&self, other: &Cutoff) -> Cutoff {
        match (*self, *other) {
            (Cutoff::None, c) | (c, Cutoff::None) => c,
            (Cutoff::Smooth { radius: r1, width: w1 }, Cutoff::Smooth { radius: r2, width: w2 }) => {
                let outer = (r1 + w1).max(r2 + w2);
                let radius = r1.max(r2);
                Cutoff::Smooth {
                    radius,
                    width: outer - radius,
                }
            }
        }
    }
}
