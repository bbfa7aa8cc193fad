//! Data log-likelihood as an optimizer- and sampler-friendly objective.
//!
//! A context bundles the grid, the measurement model, and one or more
//! observation periods ("days") recorded under the same signal timing. For
//! each candidate parameter vector it computes the stationary cycle-start
//! law of the queue, runs the forward filter over every day, and sums the
//! exact log-likelihoods.
//!
//! Evaluations that fall off the numerically supported region (saturated
//! stationary regimes, probability-mass overflow past the truncation cap)
//! yield `-inf` instead of an error: the estimation routines treat them as
//! zero-likelihood points and move on. Counters record how often that
//! happened so callers can flag suspicious fits.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::filter::{log_likelihood, LogLik};
use crate::grid::DiscreteGrid;
use crate::observe::{ObsModel, ObservationSeq};
use crate::params::TrafficParams;
use crate::queue::{stationary_cycle_start, QueuePmf};

use super::transform::ParamSpace;

/// Default truncation cap for the queue-length support during estimation.
pub const DEFAULT_K_MAX: usize = 96;

/// Likelihood of observation days under the queueing model.
pub struct LikelihoodContext<'a> {
    grid: &'a DiscreteGrid,
    model: &'a ObsModel,
    template: TrafficParams,
    days: &'a [ObservationSeq],
    k_max: usize,
    space: ParamSpace,
    stationary_misses: AtomicUsize,
    filter_misses: AtomicUsize,
}

impl<'a> LikelihoodContext<'a> {
    /// `template` fixes the profile structure (and provides the starting
    /// point for optimization); its rate values are otherwise ignored.
    pub fn new(
        grid: &'a DiscreteGrid,
        model: &'a ObsModel,
        template: TrafficParams,
        days: &'a [ObservationSeq],
        k_max: usize,
    ) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::InvalidParam("no observation days supplied".into()));
        }
        for (i, day) in days.iter().enumerate() {
            if day.horizon() != grid.horizon() {
                return Err(Error::InvalidParam(format!(
                    "day {} has horizon {}, grid expects {}",
                    i,
                    day.horizon(),
                    grid.horizon()
                )));
            }
        }
        if k_max < 2 {
            return Err(Error::InvalidParam("truncation cap must be at least 2".into()));
        }
        let space = ParamSpace::for_params(&template);
        Ok(LikelihoodContext {
            grid,
            model,
            template,
            days,
            k_max,
            space,
            stationary_misses: AtomicUsize::new(0),
            filter_misses: AtomicUsize::new(0),
        })
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn template(&self) -> &TrafficParams {
        &self.template
    }

    pub fn grid(&self) -> &DiscreteGrid {
        self.grid
    }

    pub fn model(&self) -> &ObsModel {
        self.model
    }

    pub fn days(&self) -> &[ObservationSeq] {
        self.days
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn params_from_z(&self, z: &[f64]) -> TrafficParams {
        self.space.to_params(z, &self.template)
    }

    pub fn z_from_params(&self, params: &TrafficParams) -> Vec<f64> {
        self.space.to_unconstrained(params)
    }

    /// `(stationary misses, filter misses)` accumulated so far.
    pub fn miss_counts(&self) -> (usize, usize) {
        (self.stationary_misses.load(Ordering::Relaxed), self.filter_misses.load(Ordering::Relaxed))
    }

    /// Stationary cycle-start pmf for `params`, or `None` when the regime
    /// is saturated beyond the truncation cap.
    pub fn initial_pmf(&self, params: &TrafficParams) -> Option<QueuePmf> {
        match stationary_cycle_start(&params.profile, self.grid, self.k_max) {
            Ok(st) => {
                if !st.converged {
                    self.stationary_misses.fetch_add(1, Ordering::Relaxed);
                }
                Some(st.pmf)
            }
            Err(_) => {
                self.stationary_misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Total data log-likelihood; `-inf` when the data are impossible under
    /// `params` or the evaluation left the supported region.
    pub fn log_lik(&self, params: &TrafficParams) -> f64 {
        let Some(init) = self.initial_pmf(params) else {
            return f64::NEG_INFINITY;
        };
        let mut total = 0.0;
        for day in self.days {
            match log_likelihood(day, params, self.grid, self.model, &init) {
                Ok(LogLik::Finite(l)) => total += l,
                Ok(LogLik::Impossible { .. }) => return f64::NEG_INFINITY,
                Err(_) => {
                    self.filter_misses.fetch_add(1, Ordering::Relaxed);
                    return f64::NEG_INFINITY;
                }
            }
        }
        total
    }

    pub fn log_lik_z(&self, z: &[f64]) -> f64 {
        self.log_lik(&self.params_from_z(z))
    }

    /// Objective for minimizers.
    pub fn neg_log_lik_z(&self, z: &[f64]) -> f64 {
        -self.log_lik_z(z)
    }

    /// Unnormalized log posterior in the unconstrained space: uniform box
    /// prior on the natural parameters plus the transform's Jacobian.
    pub fn log_post_z(&self, z: &[f64]) -> f64 {
        let ll = self.log_lik_z(z);
        if ll == f64::NEG_INFINITY {
            return ll;
        }
        ll + self.space.log_jacobian(z)
    }
}
