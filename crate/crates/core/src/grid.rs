//! Uniform space-time grids on the periodic square `[0, 2π)²`.

use serde::{Deserialize, Serialize};

use crate::{FieldError, Result};

/// Torus period: all fields live on `[0, 2π)²` so integer frequencies are exact.
pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// A uniform grid: `n × n` points in space, `m_t` frames over a closed time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per spatial dimension; a power of two, at least 8.
    pub n: usize,
    /// Number of time frames over the window; at least 2.
    pub m_t: usize,
    /// Start of the time window.
    pub t0: f64,
    /// End of the time window; strictly greater than `t0`.
    pub t1: f64,
}

impl GridSpec {
    /// Spatial dimension of the field engine (fixed).
    pub const D: usize = 2;

    pub fn new(n: usize, m_t: usize, t0: f64, t1: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(FieldError::InvalidGrid(format!(
                "n must be a power of two ≥ 8, got {n}"
            )));
        }
        if m_t < 2 {
            return Err(FieldError::InvalidGrid(format!("m_t must be ≥ 2, got {m_t}")));
        }
        if !(t1 > t0) {
            return Err(FieldError::InvalidGrid(format!(
                "time window must satisfy t1 > t0, got [{t0}, {t1}]"
            )));
        }
        Ok(GridSpec { n, m_t, t0, t1 })
    }

    /// Spatial grid spacing `2π / n`.
    pub fn dx(&self) -> f64 {
        TWO_PI / self.n as f64
    }

    /// Time step between consecutive frames.
    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / (self.m_t - 1) as f64
    }

    /// Time of frame `j ∈ 0..m_t`.
    pub fn time(&self, j: usize) -> f64 {
        self.t0 + self.dt() * j as f64
    }

    /// All frame times.
    pub fn times(&self) -> Vec<f64> {
        (0..self.m_t).map(|j| self.time(j)).collect()
    }

    /// Coordinates of grid point `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.dx() * i as f64, self.dx() * j as f64]
    }

    /// Signed integer frequency for DFT index `i` (Nyquist index maps to `−n/2`).
    pub fn freq(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 - 1 {
            i
        } else {
            i - n
        }
    }

    /// Largest resolvable frequency magnitude per axis (`n/2`).
    pub fn nyquist(&self) -> f64 {
        (self.n / 2) as f64
    }

    /// True if `t` lies in the closed window (with a half-step slack).
    pub fn contains_time(&self, t: f64) -> bool {
        let slack = 0.5 * self.dt();
        t >= self.t0 - slack && t <= self.t1 + slack
    }

    /// The same grid at doubled spatial resolution (for dealiased products).
    pub fn padded(&self) -> GridSpec {
        GridSpec { n: 2 * self.n, ..*self }
    }
}
