//! Cyclic Bernoulli arrival profiles.
//!
//! At most one vehicle arrives per step; the arrival probability is a
//! periodic function of the phase within the signal cycle. Two shapes are
//! supported: a constant rate, and a piecewise-constant rate over phase
//! segments (e.g. platoons released by an upstream signal).

use crate::error::{Error, Result};
use crate::grid::DiscreteGrid;

/// Per-step arrival probability as a function of cycle phase.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalProfile {
    /// Same rate at every step.
    Uniform { rate: f64 },
    /// `rates[i]` applies to phases `[breakpoints[i], breakpoints[i+1])`,
    /// with the last segment running to the end of the cycle.
    /// `breakpoints[0]` is always 0.
    PiecewiseConstant { breakpoints: Vec<usize>, rates: Vec<f64> },
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate.is_finite() && (0.0..=1.0).contains(&rate)) {
        return Err(Error::InvalidParam(format!(
            "arrival probability must lie in [0, 1], got {rate}"
        )));
    }
    Ok(())
}

impl ArrivalProfile {
    pub fn uniform(rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(ArrivalProfile::Uniform { rate })
    }

    /// Piecewise profile over a cycle of `cycle_len` steps. Breakpoints are
    /// phases (0-based), must start at 0 and increase strictly, and each must
    /// lie inside the cycle.
    pub fn piecewise(breakpoints: Vec<usize>, rates: Vec<f64>, cycle_len: usize) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != rates.len() {
            return Err(Error::InvalidParam(format!(
                "need matching non-empty breakpoints and rates, got {} and {}",
                breakpoints.len(),
                rates.len()
            )));
        }
        if breakpoints[0] != 0 {
            return Err(Error::InvalidParam(format!(
                "first breakpoint must be phase 0, got {}",
                breakpoints[0]
            )));
        }
        for w in breakpoints.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidParam(format!(
                    "breakpoints must increase strictly, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        if *breakpoints.last().unwrap() >= cycle_len {
            return Err(Error::InvalidParam(format!(
                "breakpoint {} lies outside the cycle of {cycle_len} steps",
                breakpoints.last().unwrap()
            )));
        }
        for &r in &rates {
            check_rate(r)?;
        }
        Ok(ArrivalProfile::PiecewiseConstant { breakpoints, rates })
    }

    /// Arrival probability at a phase in `0..cycle_len`.
    #[inline]
    pub fn rate_at_phase(&self, phase: usize) -> f64 {
        match self {
            ArrivalProfile::Uniform { rate } => *rate,
            ArrivalProfile::PiecewiseConstant { breakpoints, rates } => {
                // Segments are few (platoon patterns); linear scan beats a
                // binary search at these sizes.
                let mut idx = 0;
                for (i, &b) in breakpoints.iter().enumerate() {
                    if b <= phase {
                        idx = i;
                    } else {
                        break;
                    }
                }
                rates[idx]
            }
        }
    }

    /// Arrival probability at step `t` (1-based) on `grid`.
    #[inline]
    pub fn rate_at(&self, t: usize, grid: &DiscreteGrid) -> f64 {
        self.rate_at_phase(grid.phase(t))
    }

    /// Cycle-averaged demand in vehicles per hour given the step length.
    pub fn average_volume_vph(&self, cycle_len: usize, delta_t: f64) -> f64 {
        let per_step = match self {
            ArrivalProfile::Uniform { rate } => *rate,
            ArrivalProfile::PiecewiseConstant { breakpoints, rates } => {
                let mut total = 0.0;
                for i in 0..rates.len() {
                    let end = breakpoints.get(i + 1).copied().unwrap_or(cycle_len);
                    total += rates[i] * (end - breakpoints[i]) as f64;
                }
                total / cycle_len as f64
            }
        };
        per_step * 3600.0 / delta_t
    }

    /// Per-step probability that makes a uniform profile carry `vph`
    /// vehicles per hour.
    pub fn rate_for_volume(vph: f64, delta_t: f64) -> Result<f64> {
        let rate = vph * delta_t / 3600.0;
        check_rate(rate)?;
        Ok(rate)
    }

    /// The free rate parameters, in segment order (a uniform profile has one).
    pub fn rates(&self) -> Vec<f64> {
        match self {
            ArrivalProfile::Uniform { rate } => vec![*rate],
            ArrivalProfile::PiecewiseConstant { rates, .. } => rates.clone(),
        }
    }

    /// Same shape with replaced rate parameters; `rates` must match
    /// [`Self::rates`] in length.
    pub fn with_rates(&self, rates: &[f64]) -> Result<Self> {
        match self {
            ArrivalProfile::Uniform { .. } => {
                if rates.len() != 1 {
                    return Err(Error::InvalidParam(format!(
                        "uniform profile takes 1 rate, got {}",
                        rates.len()
                    )));
                }
                ArrivalProfile::uniform(rates[0])
            }
            ArrivalProfile::PiecewiseConstant { breakpoints, rates: old } => {
                if rates.len() != old.len() {
                    return Err(Error::InvalidParam(format!(
                        "profile takes {} rates, got {}",
                        old.len(),
                        rates.len()
                    )));
                }
                for &r in rates {
                    check_rate(r)?;
                }
                Ok(ArrivalProfile::PiecewiseConstant {
                    breakpoints: breakpoints.clone(),
                    rates: rates.to_vec(),
                })
            }
        }
    }

    /// Number of free rate parameters.
    pub fn rate_count(&self) -> usize {
        match self {
            ArrivalProfile::Uniform { .. } => 1,
            ArrivalProfile::PiecewiseConstant { rates, .. } => rates.len(),
        }
    }
}
