//! Discrete Gaussian measurement kernel for stop-position noise.
//!
//! A reported stop position differs from the true one by an integer offset
//! `c` with probability proportional to the standard normal density at
//! `c / sigma`, truncated to `|c| <= half_width` and normalized. With
//! `half_width = 0` the kernel degenerates to a point mass at 0 (noise-free
//! measurements) regardless of `sigma`.

use crate::error::{Error, Result};

/// Symmetric, normalized noise kernel on integer offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussKernel {
    sigma: f64,
    half_width: usize,
    /// `weights[c + half_width]` is the probability of offset `c`.
    weights: Vec<f64>,
}

impl GaussKernel {
    pub fn new(sigma: f64, half_width: usize) -> Result<Self> {
        if half_width > 0 && !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParam(format!(
                "kernel sigma must be positive for half_width {half_width}, got {sigma}"
            )));
        }
        let mut weights = Vec::with_capacity(2 * half_width + 1);
        for c in -(half_width as i64)..=half_width as i64 {
            let z = if half_width == 0 { 0.0 } else { c as f64 / sigma };
            weights.push((-0.5 * z * z).exp());
        }
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self { sigma, half_width, weights })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Probability of offset `c`; zero outside the support.
    #[inline]
    pub fn weight(&self, c: i64) -> f64 {
        if c.unsigned_abs() as usize > self.half_width {
            0.0
        } else {
            self.weights[(c + self.half_width as i64) as usize]
        }
    }

    /// All weights in offset order `-half_width ..= half_width`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}
