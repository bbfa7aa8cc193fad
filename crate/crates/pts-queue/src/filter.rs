//! Forward filtering over the hidden queue.
//!
//! One pass over the horizon computes, per step, the posterior of the queue
//! given all observations so far, together with the log marginal likelihood
//! of the observation sequence under one parameter vector. Arrivals are
//! marginalized analytically: at silent steps the arrival indicator is
//! replaced by its posterior probability given the silence, and at observed
//! steps it is pinned to one. The slot report then reweights the *interim*
//! (post-arrival, pre-departure) pmf, which is exactly the queue the probe
//! sampled when it joined.
//!
//! The pass is O(horizon x queue support). Probability mass above the
//! currently reachable queue length is never touched, so typical runs stay
//! far below the nominal `k_max` cost.

use crate::error::{Error, Result};
use crate::grid::DiscreteGrid;
use crate::observe::{ObsModel, ObservationSeq};
use crate::params::TrafficParams;
use crate::queue::{QueuePmf, TRUNCATION_TOL};

/// Log marginal likelihood, with zero-probability data flagged rather than
/// collapsed into a bare `-inf` so callers can report *where* the model and
/// the data disagree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLik {
    Finite(f64),
    /// The observation at `step` has probability zero under the parameters.
    Impossible {
        step: usize,
    },
}

impl LogLik {
    /// Numeric value; `-inf` for impossible data.
    pub fn value(&self) -> f64 {
        match self {
            LogLik::Finite(v) => *v,
            LogLik::Impossible { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, LogLik::Finite(_))
    }
}

/// What [`run_filter`] should retain beyond the likelihood.
#[derive(Debug, Clone, Copy, Default)]
pub struct FilterOptions {
    /// Keep per-step summaries (posterior mean/quantiles, arrival posterior,
    /// expected departures, running log likelihood).
    pub keep_step_detail: bool,
    /// Keep the full per-step posterior pmfs (needed for state mixtures and
    /// per-cycle maximum-queue readouts; costs `horizon * k_max` floats).
    pub keep_pmfs: bool,
}

impl FilterOptions {
    /// Likelihood only — the mode parameter sweeps run in.
    pub fn lean() -> Self {
        Self::default()
    }

    pub fn full() -> Self {
        Self { keep_step_detail: true, keep_pmfs: true }
    }
}

/// Per-step posterior summary (posterior of `X(t)` given observations up to
/// and including step `t`).
#[derive(Debug, Clone, Copy)]
pub struct StepSummary {
    pub mean: f64,
    pub p05: usize,
    pub p50: usize,
    pub p95: usize,
    /// Posterior probability that a vehicle arrived this step.
    pub arrival_post: f64,
    /// Posterior probability that a vehicle departed this step.
    pub departure_post: f64,
    /// Log likelihood accumulated through this step.
    pub cum_log_lik: f64,
}

/// Output of one filtering pass.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub log_lik: LogLik,
    /// Per-step summaries if requested (empty on impossible data).
    pub steps: Vec<StepSummary>,
    /// Per-step posterior pmfs if requested (empty on impossible data).
    pub posteriors: Vec<QueuePmf>,
}

impl FilterResult {
    fn impossible(step: usize) -> Self {
        Self { log_lik: LogLik::Impossible { step }, steps: Vec::new(), posteriors: Vec::new() }
    }
}

/// Run the forward filter.
///
/// `init` is the queue pmf *before* step 1, which must describe a cycle
/// start (phase 0) of `grid`; [`crate::queue::stationary_cycle_start`]
/// produces the usual choice. The observation horizon must match the grid.
pub fn run_filter(
    obs: &ObservationSeq,
    params: &TrafficParams,
    grid: &DiscreteGrid,
    model: &ObsModel,
    init: &QueuePmf,
    opts: FilterOptions,
) -> Result<FilterResult> {
    let horizon = grid.horizon();
    if obs.horizon() != horizon {
        return Err(Error::InvalidParam(format!(
            "observation horizon {} does not match grid horizon {horizon}",
            obs.horizon()
        )));
    }
    let phi = params.phi;
    let k_max = init.k_max();
    let cycle = grid.cycle_len();

    // Phase-indexed lookups: the hot loop must not re-derive them per step.
    let rate_by_phase: Vec<f64> = (0..cycle).map(|p| params.profile.rate_at_phase(p)).collect();
    let green_by_phase: Vec<bool> = (1..=cycle).map(|t| grid.is_green(t)).collect();
    let elapsed_by_phase: Vec<usize> = (1..=cycle).map(|t| grid.elapsed_green(t)).collect();
    let half_width = model.kernel().half_width();

    let mut cur = init.mass().to_vec();
    let mut interim = vec![0.0; k_max + 1];
    let mut hi = cur.iter().rposition(|&m| m > 0.0).unwrap_or(0);

    let mut log_lik = 0.0;
    let mut steps = Vec::with_capacity(if opts.keep_step_detail { horizon } else { 0 });
    let mut posteriors = Vec::with_capacity(if opts.keep_pmfs { horizon } else { 0 });

    for t in 1..=horizon {
        let phase = (t - 1) % cycle;
        let a = rate_by_phase[phase];
        let green = green_by_phase[phase];
        let elapsed = elapsed_by_phase[phase];
        let observed = obs.arrival(t);

        // Arrival posterior given this step's (non-)observation.
        let a_hat = if observed {
            if a * phi <= 0.0 {
                return Ok(FilterResult::impossible(t));
            }
            1.0
        } else {
            let denom = 1.0 - a * phi;
            if denom <= 0.0 {
                return Ok(FilterResult::impossible(t));
            }
            a * (1.0 - phi) / denom
        };

        // Arrival sub-step on the support [0, hi] (+1 for the shift).
        let stay = 1.0 - a_hat;
        interim[0] = cur[0] * stay;
        let mut hi_i = hi;
        if hi < k_max {
            for k in 1..=hi + 1 {
                interim[k] = cur[k] * stay + cur[k - 1] * a_hat;
            }
            if a_hat > 0.0 {
                hi_i = hi + 1;
            }
        } else {
            for k in 1..=k_max {
                interim[k] = cur[k] * stay + cur[k - 1] * a_hat;
            }
            let lost = cur[k_max] * a_hat;
            if lost > TRUNCATION_TOL {
                return Err(Error::TruncationOverflow { step: t, k_max, lost });
            }
            interim[k_max] += lost;
        }

        // Observation update on the interim pmf, and the step's likelihood.
        if observed {
            let v = obs.slot(t).expect("slot present at observed arrivals");
            let mut norm = 0.0;
            for k in 1..=hi_i {
                let w = model.queue_obs_prob(green, elapsed, k as u32, v);
                interim[k] *= w;
                norm += interim[k];
            }
            interim[0] = 0.0; // an observed arrival implies a non-empty interim queue
            if !(norm > 0.0) {
                return Ok(FilterResult::impossible(t));
            }
            log_lik += (a * phi).ln() + norm.ln();
            let inv = 1.0 / norm;
            for m in &mut interim[..=hi_i] {
                *m *= inv;
            }
            // The report pins the interim queue near the implied slot.
            if v > 0 {
                let cap = (v as usize + half_width).saturating_sub(elapsed).max(1);
                hi_i = hi_i.min(cap);
            } else {
                hi_i = hi_i.min(1);
            }
        } else {
            log_lik += (1.0 - a * phi).ln();
        }

        // Departure sub-step, then a drift-guard renormalization. The
        // support extent at the start of this step bounds everything ever
        // written to `cur`, so clearing up to it below keeps the invariant
        // that `cur[k] = 0` for all `k > hi`.
        let prev_reach = hi;
        let departure_post;
        if green {
            let mut moved = 0.0;
            for k in 1..=hi_i {
                moved += interim[k];
            }
            departure_post = moved;
            cur[0] = interim[0] + if hi_i >= 1 { interim[1] } else { 0.0 };
            for k in 1..hi_i {
                cur[k] = interim[k + 1];
            }
            hi = hi_i.saturating_sub(1);
        } else {
            departure_post = 0.0;
            cur[..=hi_i].copy_from_slice(&interim[..=hi_i]);
            hi = hi_i;
        }
        let reach = (prev_reach + 1).min(k_max);
        for k in hi + 1..=reach {
            cur[k] = 0.0;
        }

        let total: f64 = cur[..=hi].iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical(format!("posterior mass {total} at step {t}")));
        }
        let inv = 1.0 / total;
        for m in &mut cur[..=hi] {
            *m *= inv;
        }
        while hi > 0 && cur[hi] == 0.0 {
            hi -= 1;
        }

        if opts.keep_pmfs || opts.keep_step_detail {
            let mut mass = vec![0.0; k_max + 1];
            mass[..=hi].copy_from_slice(&cur[..=hi]);
            let pmf = QueuePmf::from_mass(mass)
                .map_err(|e| Error::Numerical(format!("step {t}: {e}")))?;
            if opts.keep_step_detail {
                steps.push(StepSummary {
                    mean: pmf.mean(),
                    p05: pmf.quantile(0.05),
                    p50: pmf.quantile(0.50),
                    p95: pmf.quantile(0.95),
                    arrival_post: a_hat,
                    departure_post,
                    cum_log_lik: log_lik,
                });
            }
            if opts.keep_pmfs {
                posteriors.push(pmf);
            }
        }
    }

    Ok(FilterResult { log_lik: LogLik::Finite(log_lik), steps, posteriors })
}

/// Likelihood-only convenience wrapper.
pub fn log_likelihood(
    obs: &ObservationSeq,
    params: &TrafficParams,
    grid: &DiscreteGrid,
    model: &ObsModel,
    init: &QueuePmf,
) -> Result<LogLik> {
    Ok(run_filter(obs, params, grid, model, init, FilterOptions::lean())?.log_lik)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::ArrivalProfile;
    use crate::kernel::GaussKernel;
    use crate::queue::step_pmf;

    fn uniform_params(rate: f64, phi: f64) -> TrafficParams {
        TrafficParams::new(ArrivalProfile::uniform(rate).unwrap(), phi).unwrap()
    }

    fn model(sigma: f64, h: usize) -> ObsModel {
        ObsModel::new(GaussKernel::new(sigma, h).unwrap())
    }

    /// All-red one-step grid.
    fn red1() -> DiscreteGrid {
        DiscreteGrid::new(1.0, 2, 1, 1, 1).unwrap()
    }

    /// Green-at-step-1 grid.
    fn green1() -> DiscreteGrid {
        DiscreteGrid::new(1.0, 2, 0, 1, 1).unwrap()
    }

    #[test]
    fn silent_step_likelihood_and_posterior() {
        let grid = red1();
        let params = uniform_params(0.2, 0.15);
        let init = QueuePmf::delta(0, 10).unwrap();
        let res = run_filter(
            &ObservationSeq::empty(1),
            &params,
            &grid,
            &model(1.0, 2),
            &init,
            FilterOptions::full(),
        )
        .unwrap();
        match res.log_lik {
            LogLik::Finite(l) => assert!((l - (-0.030459207484708574)).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        // Posterior arrival probability 0.2*0.85/0.97 lands the queue at 1.
        let expect = 0.2 * 0.85 / 0.97;
        assert!((res.posteriors[0].prob(1) - expect).abs() < 1e-12);
        assert!((res.posteriors[0].prob(0) - (1.0 - expect)).abs() < 1e-12);
        assert!((res.steps[0].arrival_post - expect).abs() < 1e-12);
    }

    #[test]
    fn observed_stop_noise_free() {
        let grid = red1();
        let params = uniform_params(0.2, 0.5);
        let init = QueuePmf::delta(0, 10).unwrap();
        let obs = ObservationSeq::from_events(1, &[(1, 1)]).unwrap();
        let res =
            run_filter(&obs, &params, &grid, &model(0.0, 0), &init, FilterOptions::full()).unwrap();
        assert!((res.log_lik.value() - (-2.3025850929940455)).abs() < 1e-12);
        assert_eq!(res.posteriors[0].prob(1), 1.0);
        assert_eq!(res.steps[0].arrival_post, 1.0);
    }

    #[test]
    fn observed_pass_through_green() {
        let grid = green1();
        let params = uniform_params(0.2, 0.5);
        let init = QueuePmf::delta(0, 10).unwrap();
        let obs = ObservationSeq::from_events(1, &[(1, 0)]).unwrap();
        let res =
            run_filter(&obs, &params, &grid, &model(0.0, 0), &init, FilterOptions::full()).unwrap();
        // ln(a * phi): the pass itself is certain given the empty queue.
        assert!((res.log_lik.value() - (-2.3025850929940455)).abs() < 1e-12);
        assert_eq!(res.posteriors[0].prob(0), 1.0);
        // The probe departed (passed the bar) during this green step.
        assert_eq!(res.steps[0].departure_post, 1.0);
    }

    #[test]
    fn observed_stop_with_noise_kernel() {
        let grid = red1();
        let params = uniform_params(0.2, 0.5);
        let init = QueuePmf::delta(0, 10).unwrap();
        let obs = ObservationSeq::from_events(1, &[(1, 1)]).unwrap();
        let res =
            run_filter(&obs, &params, &grid, &model(1.0, 2), &init, FilterOptions::lean()).unwrap();
        // K = truncated kernel at (true slot 1, reported 1).
        assert!((res.log_lik.value() - (-2.8575420126360362)).abs() < 1e-12);
    }

    #[test]
    fn impossible_observations_are_flagged_not_crashed() {
        let init = QueuePmf::delta(0, 10).unwrap();
        let m = model(0.0, 0);

        // A slot-0 report at a red step contradicts "red arrivals stop".
        let obs = ObservationSeq::from_events(1, &[(1, 0)]).unwrap();
        let res =
            run_filter(&obs, &uniform_params(0.2, 0.5), &red1(), &m, &init, FilterOptions::lean())
                .unwrap();
        assert_eq!(res.log_lik, LogLik::Impossible { step: 1 });
        assert_eq!(res.log_lik.value(), f64::NEG_INFINITY);

        // An observed arrival under zero demand.
        let obs = ObservationSeq::from_events(1, &[(1, 1)]).unwrap();
        let res =
            run_filter(&obs, &uniform_params(0.0, 0.5), &red1(), &m, &init, FilterOptions::lean())
                .unwrap();
        assert_eq!(res.log_lik, LogLik::Impossible { step: 1 });

        // Certain arrivals with certain observation leave no silent steps.
        let res = run_filter(
            &ObservationSeq::empty(1),
            &uniform_params(1.0, 1.0),
            &red1(),
            &m,
            &init,
            FilterOptions::lean(),
        )
        .unwrap();
        assert_eq!(res.log_lik, LogLik::Impossible { step: 1 });
    }

    #[test]
    fn report_localizes_the_interim_queue() {
        // Five red steps, one observation at t = 3 with half-width 1:
        // the interim queue is pinned to within one slot of the report.
        let grid = DiscreteGrid::new(1.0, 10, 9, 1, 5).unwrap();
        let params = uniform_params(0.3, 0.4);
        let init = QueuePmf::delta(0, 10).unwrap();
        let obs = ObservationSeq::from_events(5, &[(3, 2)]).unwrap();
        let res =
            run_filter(&obs, &params, &grid, &model(1.0, 1), &init, FilterOptions::full()).unwrap();
        let post = &res.posteriors[2]; // X(3), red step: interim == posterior
        let in_window: f64 = (1..=3).map(|k| post.prob(k)).sum();
        assert!((in_window - 1.0).abs() < 1e-12, "support {:?}", post.mass());
        assert!(res.log_lik.is_finite());
    }

    #[test]
    fn matches_public_step_transitions_when_silent() {
        // With no observations the filter is just the queue recursion run at
        // the arrival posterior rate; cross-check against the public
        // step_pmf over a full cycle.
        let grid = DiscreteGrid::new(1.0, 6, 4, 2, 12).unwrap();
        let params = uniform_params(0.25, 0.3);
        let init = QueuePmf::delta(0, 12).unwrap();
        let res = run_filter(
            &ObservationSeq::empty(12),
            &params,
            &grid,
            &model(1.0, 2),
            &init,
            FilterOptions::full(),
        )
        .unwrap();

        let mut pmf = init;
        for t in 1..=12usize {
            let a = params.profile.rate_at(t, &grid);
            let a_hat = a * (1.0 - params.phi) / (1.0 - a * params.phi);
            let (next, _, _) = step_pmf(&pmf, a_hat, grid.is_green(t)).unwrap();
            pmf = next;
            assert!(res.posteriors[t - 1].l1_distance(&pmf) < 1e-12, "diverged at t = {t}");
        }
    }

    #[test]
    fn lean_and_full_agree_on_likelihood() {
        let grid = DiscreteGrid::new(1.0, 10, 6, 4, 40).unwrap();
        let params = uniform_params(0.3, 0.4);
        let init = QueuePmf::delta(0, 20).unwrap();
        // Steps 2 and 13 are red stops, 27 a green-onset stop, 37 a green pass.
        let obs = ObservationSeq::from_events(40, &[(2, 1), (13, 3), (27, 2), (37, 0)]).unwrap();
        let m = model(1.0, 1);
        let lean = run_filter(&obs, &params, &grid, &m, &init, FilterOptions::lean()).unwrap();
        let full = run_filter(&obs, &params, &grid, &m, &init, FilterOptions::full()).unwrap();
        assert_eq!(lean.log_lik.value(), full.log_lik.value());
        assert!(lean.posteriors.is_empty() && lean.steps.is_empty());
        assert_eq!(full.posteriors.len(), 40);
        for p in &full.posteriors {
            assert!((p.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn certain_penetration_noise_free_recovers_truth_exactly() {
        // phi = 1, exact slots: the filter must track the true queue with
        // point-mass posteriors.
        let grid = DiscreteGrid::new(1.0, 10, 6, 4, 30).unwrap();
        let arrivals: Vec<bool> = (1..=30)
            .map(|t| matches!(t, 1 | 2 | 5 | 7 | 8 | 11 | 14 | 17 | 18 | 21 | 25 | 29))
            .collect();

        // Hidden dynamics + exact observation construction.
        let mut x = 0u32;
        let mut events = Vec::new();
        let mut truth = Vec::new();
        for t in 1..=30usize {
            let a = arrivals[t - 1];
            let x_interim = x + a as u32;
            let green = grid.is_green(t);
            if a {
                let slot = if green && x_interim == 1 {
                    0
                } else {
                    grid.elapsed_green(t) as u32 + x_interim
                };
                events.push((t, slot));
            }
            x = x_interim - (green && x_interim >= 1) as u32;
            truth.push(x);
        }

        let obs = ObservationSeq::from_events(30, &events).unwrap();
        let params = uniform_params(0.4, 1.0);
        let init = QueuePmf::delta(0, 15).unwrap();
        let res =
            run_filter(&obs, &params, &grid, &model(0.0, 0), &init, FilterOptions::full()).unwrap();
        assert!(res.log_lik.is_finite());
        for t in 1..=30usize {
            assert_eq!(
                res.posteriors[t - 1].prob(truth[t - 1] as usize),
                1.0,
                "step {t}: posterior {:?}, truth {}",
                res.posteriors[t - 1].mass(),
                truth[t - 1]
            );
        }
    }
}
