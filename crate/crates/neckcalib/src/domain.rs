//! Axis-aligned boxes, used both as fiber domains and as chart domains.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxConfig", into = "BoxConfig")]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BoxConfig {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<BoxConfig> for BoxDomain {
    type Error = Error;
    fn try_from(c: BoxConfig) -> Result<Self> {
        BoxDomain::new(c.lo, c.hi)
    }
}

impl From<BoxDomain> for BoxConfig {
    fn from(b: BoxDomain) -> BoxConfig {
        BoxConfig { lo: b.lo, hi: b.hi }
    }
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::invalid("box bounds must be non-empty and same length"));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::invalid("box bounds must be finite with lo < hi"));
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    /// Symmetric interval `[-w, w]` in one dimension.
    pub fn symmetric(w: f64) -> Result<Self> {
        BoxDomain::new(vec![-w], vec![w])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn contains(&self, q: &[f64], tol: f64) -> bool {
        q.len() == self.dim()
            && q.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (x, (l, h)) in q.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *x = x.clamp(*l, *h);
        }
    }

    /// Evenly spaced grid along one axis, endpoints included.
    pub fn axis_grid(&self, axis: usize, count: usize) -> Vec<f64> {
        let (l, h) = (self.lo[axis], self.hi[axis]);
        if count == 1 {
            return vec![0.5 * (l + h)];
        }
        (0..count)
            .map(|i| l + (h - l) * i as f64 / (count - 1) as f64)
            .collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| rng.random_range(*l..*h))
            .collect()
    }
}
