//! Bounded-box parameterization.
//!
//! Rates live in `(0, RATE_MAX)` and the penetration probability in
//! `(PHI_MIN, 1)`; both are mapped to the real line with scaled logits so
//! optimizers and samplers never see a constraint. The prior is uniform on
//! the box, which in the unconstrained space becomes the log-Jacobian of
//! the map.

use crate::params::TrafficParams;

/// Upper bound for per-step arrival rates. A rate of one would mean an
/// arrival every step — far beyond anything a single approach can discharge
/// — and the open bound keeps the logit finite.
pub const RATE_MAX: f64 = 0.95;

/// Lower bound for the penetration probability. Exact zero would make every
/// observation impossible; half a percent is below any usable probe share.
pub const PHI_MIN: f64 = 0.005;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// `ln sigmoid(z)`, stable for large negative `z`.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Maps between bounded traffic parameters and unconstrained coordinates.
///
/// Coordinate layout matches [`TrafficParams::flatten`]: one entry per
/// profile rate, then the penetration probability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpace {
    rate_count: usize,
}

impl ParamSpace {
    pub fn for_params(template: &TrafficParams) -> Self {
        ParamSpace { rate_count: template.profile.rate_count() }
    }

    pub fn dim(&self) -> usize {
        self.rate_count + 1
    }

    pub fn rate_count(&self) -> usize {
        self.rate_count
    }

    pub fn to_unconstrained(&self, params: &TrafficParams) -> Vec<f64> {
        let flat = params.flatten();
        assert_eq!(flat.len(), self.dim());
        let mut z = Vec::with_capacity(flat.len());
        for &r in &flat[..self.rate_count] {
            z.push(logit(r / RATE_MAX));
        }
        z.push(logit((flat[self.rate_count] - PHI_MIN) / (1.0 - PHI_MIN)));
        z
    }

    /// Inverse map; `template` supplies the profile structure.
    pub fn to_params(&self, z: &[f64], template: &TrafficParams) -> TrafficParams {
        assert_eq!(z.len(), self.dim());
        let mut flat = Vec::with_capacity(z.len());
        for &zi in &z[..self.rate_count] {
            flat.push(RATE_MAX * sigmoid(zi));
        }
        flat.push(PHI_MIN + (1.0 - PHI_MIN) * sigmoid(z[self.rate_count]));
        template.unflatten(&flat).expect("bounded transform always yields valid parameters")
    }

    /// `ln |dθ/dz|` — the density of the uniform box prior in `z`, up to a
    /// constant.
    pub fn log_jacobian(&self, z: &[f64]) -> f64 {
        assert_eq!(z.len(), self.dim());
        let widths_log: f64 = (RATE_MAX.ln() * self.rate_count as f64) + (1.0 - PHI_MIN).ln();
        let bends: f64 = z.iter().map(|&zi| log_sigmoid(zi) + log_sigmoid(-zi)).sum();
        widths_log + bends
    }
}
