//! Posterior by quadrature for two-parameter models.
//!
//! When the profile has a single rate, the posterior over `(rate, phi)` can
//! be evaluated on a grid outright. It is the slowest estimator here but
//! has no approximation beyond the grid itself, which makes it the
//! reference the sampling-based methods are checked against.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::likelihood::LikelihoodContext;
use super::summary::log_sum_exp;

/// Normalized posterior over a rectangular `(rate, phi)` grid, with a flat
/// prior over the cells.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    pub rates: Vec<f64>,
    pub phis: Vec<f64>,
    /// Row-major `[rate][phi]` log-likelihoods.
    pub log_lik: Vec<f64>,
    /// Cell posterior masses, summing to one.
    pub posterior: Vec<f64>,
}

impl GridPosterior {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.phis.len() + j
    }

    pub fn cell(&self, i: usize, j: usize) -> f64 {
        self.posterior[self.idx(i, j)]
    }

    /// Indices of the highest-posterior cell.
    pub fn map_cell(&self) -> (usize, usize) {
        let (best, _) = self
            .posterior
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is non-empty");
        (best / self.phis.len(), best % self.phis.len())
    }

    /// Posterior means of rate and penetration.
    pub fn mean(&self) -> (f64, f64) {
        let mut mr = 0.0;
        let mut mp = 0.0;
        for i in 0..self.rates.len() {
            for j in 0..self.phis.len() {
                let w = self.cell(i, j);
                mr += w * self.rates[i];
                mp += w * self.phis[j];
            }
        }
        (mr, mp)
    }

    pub fn marginal_rate(&self) -> Vec<f64> {
        (0..self.rates.len()).map(|i| (0..self.phis.len()).map(|j| self.cell(i, j)).sum()).collect()
    }

    pub fn marginal_phi(&self) -> Vec<f64> {
        (0..self.phis.len()).map(|j| (0..self.rates.len()).map(|i| self.cell(i, j)).sum()).collect()
    }
}

/// Evaluate the posterior on the cross product of `rates` and `phis`.
pub fn grid_posterior(
    ctx: &LikelihoodContext,
    rates: &[f64],
    phis: &[f64],
) -> Result<GridPosterior> {
    if ctx.space().rate_count() != 1 {
        return Err(Error::InvalidParam(format!(
            "grid evaluation needs a single-rate profile, this one has {} rates",
            ctx.space().rate_count()
        )));
    }
    if rates.is_empty() || phis.is_empty() {
        return Err(Error::InvalidParam("empty evaluation grid".into()));
    }

    let cells: Vec<(f64, f64)> =
        rates.iter().flat_map(|&r| phis.iter().map(move |&p| (r, p))).collect();
    // Cells are independent likelihood evaluations; the indexed collect
    // keeps the output order deterministic regardless of scheduling.
    let log_lik: Vec<f64> = cells
        .par_iter()
        .map(|&(r, p)| match ctx.template().unflatten(&[r, p]) {
            Ok(params) => ctx.log_lik(&params),
            Err(_) => f64::NEG_INFINITY,
        })
        .collect();

    let norm = log_sum_exp(log_lik.iter().copied());
    if !norm.is_finite() {
        return Err(Error::Degenerate("the data have zero likelihood on every grid cell".into()));
    }
    let posterior: Vec<f64> = log_lik.iter().map(|l| (l - norm).exp()).collect();
    Ok(GridPosterior { rates: rates.to_vec(), phis: phis.to_vec(), log_lik, posterior })
}
