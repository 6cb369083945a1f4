use serde::{Deserialize, Serialize};

/// Multi-index in three variables.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub struct MultiIndex(pub [u8; 3]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0, 0, 0]);

    pub fn new(a: u8, b: u8, c: u8) -> Self {
        MultiIndex([a, b, c])
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&k| k as usize).sum()
    }

    /// alpha! = a1! a2! a3!
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&k| fact(k as usize)).product()
    }

    /// x^alpha
    pub fn pow(&self, x: [f64; 3]) -> f64 {
        let mut p = 1.0;
        for i in 0..3 {
            p *= x[i].powi(self.0[i] as i32);
        }
        p
    }

    pub fn add(&self, other: MultiIndex) -> MultiIndex {
        MultiIndex([
            self.0[0] + other.0[0],
            self.0[1] + other.0[1],
            self.0[2] + other.0[2],
        ])
    }

    /// All multi-indices with |alpha| <= n, lexicographically ordered.
    pub fn up_to(n: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for a in 0..=n {
            for b in 0..=(n - a) {
                for c in 0..=(n - a - b) {
                    out.push(MultiIndex([a as u8, b as u8, c as u8]));
                }
            }
        }
        out.sort_by_key(|m| (m.order(), m.0));
        out
    }

    /// All multi-indices with |alpha| == n.
    pub fn of_order(n: usize) -> Vec<MultiIndex> {
        Self::up_to(n).into_iter().filter(|m| m.order() == n).collect()
    }
}

pub fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}
