//! Brute-force reference implementations for small horizons.
//!
//! [`enumerate_filter`] computes the observation likelihood and the final
//! queue posterior by summing over *every* arrival sequence and initial
//! queue state — no recursion, no pmf algebra, no renormalization tricks.
//! It exists so the fast forward filter has something exact to be checked
//! against; its cost is `O(2^horizon)` and it refuses horizons past
//! [`MAX_ENUM_HORIZON`].
//!
//! Unlike the filter, the enumeration does not cap the queue, so comparisons
//! should size the filter's `k_max` generously enough (initial support plus
//! horizon) that the cap never binds.

use crate::error::{Error, Result};
use crate::grid::DiscreteGrid;
use crate::observe::{arrival_obs_prob, ObsModel, ObservationSeq};
use crate::params::TrafficParams;
use crate::queue::QueuePmf;

/// Enumeration refuses horizons beyond this.
pub const MAX_ENUM_HORIZON: usize = 16;

/// Result of an exhaustive filtering pass.
#[derive(Debug, Clone)]
pub struct Enumerated {
    /// Log probability of the observation sequence; `-inf` when impossible.
    pub log_lik: f64,
    /// Posterior pmf of the queue after the final step, on `0..len`.
    /// Empty when the data is impossible.
    pub posterior: Vec<f64>,
}

/// Sum over all `2^horizon` arrival sequences and all initial states.
pub fn enumerate_filter(
    obs: &ObservationSeq,
    params: &TrafficParams,
    grid: &DiscreteGrid,
    model: &ObsModel,
    init: &QueuePmf,
) -> Result<Enumerated> {
    let horizon = grid.horizon();
    if horizon > MAX_ENUM_HORIZON {
        return Err(Error::HorizonTooLarge { horizon, max: MAX_ENUM_HORIZON });
    }
    if obs.horizon() != horizon {
        return Err(Error::InvalidParam(format!(
            "observation horizon {} does not match grid horizon {horizon}",
            obs.horizon()
        )));
    }
    let phi = params.phi;
    let mut total = 0.0;
    let mut posterior = vec![0.0; init.k_max() + horizon + 2];

    for (k0, &w0) in init.mass().iter().enumerate() {
        if w0 == 0.0 {
            continue;
        }
        for mask in 0u64..(1u64 << horizon) {
            let mut p = w0;
            let mut x = k0 as u32;
            let mut dead = false;
            for t in 1..=horizon {
                let arrived = (mask >> (t - 1)) & 1 == 1;
                let rate = params.profile.rate_at(t, grid);
                p *= if arrived { rate } else { 1.0 - rate };
                p *= arrival_obs_prob(arrived, obs.arrival(t), phi);
                if p == 0.0 {
                    dead = true;
                    break;
                }
                let interim = x + arrived as u32;
                if let Some(v) = obs.slot(t) {
                    p *= model.queue_obs_prob(grid.is_green(t), grid.elapsed_green(t), interim, v);
                    if p == 0.0 {
                        dead = true;
                        break;
                    }
                }
                x = interim - (grid.is_green(t) && interim >= 1) as u32;
            }
            if !dead {
                total += p;
                posterior[x as usize] += p;
            }
        }
    }

    if total <= 0.0 {
        return Ok(Enumerated { log_lik: f64::NEG_INFINITY, posterior: Vec::new() });
    }
    for m in &mut posterior {
        *m /= total;
    }
    while posterior.len() > 1 && *posterior.last().unwrap() == 0.0 {
        posterior.pop();
    }
    Ok(Enumerated { log_lik: total.ln(), posterior })
}
