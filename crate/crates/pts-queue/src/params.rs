//! The estimated parameter vector: demand profile rates plus penetration.

use crate::arrival::ArrivalProfile;
use crate::error::{Error, Result};

/// Everything the filter needs about the world that is *unknown* in
/// estimation: the arrival profile (one or more rates) and the probe
/// penetration probability `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    pub profile: ArrivalProfile,
    pub phi: f64,
}

impl TrafficParams {
    pub fn new(profile: ArrivalProfile, phi: f64) -> Result<Self> {
        if !(phi.is_finite() && (0.0..=1.0).contains(&phi)) {
            return Err(Error::InvalidParam(format!("penetration must lie in [0, 1], got {phi}")));
        }
        Ok(Self { profile, phi })
    }

    /// Number of free scalars (rates, then `phi`).
    pub fn dim(&self) -> usize {
        self.profile.rate_count() + 1
    }

    /// Flat vector `[rate_0, ..., rate_{m-1}, phi]`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.profile.rates();
        v.push(self.phi);
        v
    }

    /// Rebuild from a flat vector, reusing this value's profile shape.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.dim() {
            return Err(Error::InvalidParam(format!(
                "parameter vector has {} entries, expected {}",
                flat.len(),
                self.dim()
            )));
        }
        let (rates, phi) = flat.split_at(flat.len() - 1);
        Self::new(self.profile.with_rates(rates)?, phi[0])
    }

    /// Column names matching [`TrafficParams::flatten`]: a single rate is
    /// just `rate`, several are `rate0..`, and `phi` is always last.
    pub fn names(&self) -> Vec<String> {
        let rates = self.profile.rate_count();
        let mut names: Vec<String> = if rates == 1 {
            vec!["rate".into()]
        } else {
            (0..rates).map(|i| format!("rate{i}")).collect()
        };
        names.push("phi".into());
        names
    }
}
