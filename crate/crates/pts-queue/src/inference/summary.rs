//! Weighted posterior summaries and the filtered-state mixture.

use crate::error::{Error, Result};
use crate::filter::{run_filter, FilterOptions, LogLik};
use crate::grid::DiscreteGrid;
use crate::observe::{ObsModel, ObservationSeq};
use crate::queue::QueuePmf;

use super::laplace::Draw;
use super::likelihood::LikelihoodContext;

/// Minimum effective draw count for interval summaries.
pub const MIN_EFF_DRAWS: f64 = 10.0;

/// `ln Σ exp(x_i)`, tolerating `-inf` entries.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn effective_draws(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let w: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, wi)| v * wi).sum::<f64>() / w
}

pub fn weighted_sd(values: &[f64], weights: &[f64]) -> f64 {
    let m = weighted_mean(values, weights);
    let w: f64 = weights.iter().sum();
    let var = values.iter().zip(weights).map(|(v, wi)| wi * (v - m) * (v - m)).sum::<f64>() / w;
    var.max(0.0).sqrt()
}

/// Smallest value whose cumulative weight reaches `q` of the total.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    assert_eq!(values.len(), weights.len());
    assert!(!values.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&q));
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = weights.iter().sum();
    let target = q * total;
    let mut cum = 0.0;
    for &(v, w) in &pairs {
        cum += w;
        if cum >= target {
            return v;
        }
    }
    pairs.last().unwrap().0
}

/// A credible interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CredInterval {
    pub lo: f64,
    pub hi: f64,
}

impl CredInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Equal-tailed interval at the given level.
pub fn central_interval(values: &[f64], weights: &[f64], level: f64) -> CredInterval {
    let tail = (1.0 - level) / 2.0;
    CredInterval {
        lo: weighted_quantile(values, weights, tail),
        hi: weighted_quantile(values, weights, 1.0 - tail),
    }
}

/// Narrowest interval holding at least `level` of the weight.
///
/// Refuses to summarize fewer than [`MIN_EFF_DRAWS`] effective draws — a
/// handful of heavy weights can make any interval look precise.
pub fn weighted_hdi(values: &[f64], weights: &[f64], level: f64) -> Result<CredInterval> {
    assert_eq!(values.len(), weights.len());
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidParam(format!("interval level must be in (0,1), got {level}")));
    }
    let eff = effective_draws(weights);
    if eff < MIN_EFF_DRAWS {
        return Err(Error::Degenerate(format!(
            "only {eff:.1} effective draws; interval summaries need at least {MIN_EFF_DRAWS}"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let target = level * total;

    // Prefix sums: mass of pairs[i..=j] = prefix[j+1] - prefix[i].
    let mut prefix = Vec::with_capacity(pairs.len() + 1);
    prefix.push(0.0);
    for &(_, w) in &pairs {
        prefix.push(prefix.last().unwrap() + w);
    }

    let mut best: Option<CredInterval> = None;
    let mut j = 0;
    for i in 0..pairs.len() {
        if j < i {
            j = i;
        }
        while j < pairs.len() && prefix[j + 1] - prefix[i] < target {
            j += 1;
        }
        if j == pairs.len() {
            break;
        }
        let cand = CredInterval { lo: pairs[i].0, hi: pairs[j].0 };
        if best.map_or(true, |b| cand.width() < b.width()) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::Degenerate("no window reaches the requested mass".into()))
}

/// Per-step posterior summaries of the hidden queue, mixed over parameter
/// draws.
#[derive(Debug, Clone)]
pub struct StateProfile {
    pub mean: Vec<f64>,
    pub p05: Vec<usize>,
    pub p50: Vec<usize>,
    pub p95: Vec<usize>,
    /// Posterior probability that a vehicle arrived at each step.
    pub arrival_post: Vec<f64>,
    /// Draws whose filter deemed the data impossible (excluded, reweighted).
    pub skipped_draws: usize,
}

/// Mix the filtered queue posteriors over a weighted parameter sample.
///
/// Streams one filter pass per draw, so memory stays at one pmf table
/// regardless of the number of draws.
pub fn state_mixture(
    obs: &ObservationSeq,
    grid: &DiscreteGrid,
    model: &ObsModel,
    ctx: &LikelihoodContext,
    draws: &[Draw],
) -> Result<StateProfile> {
    if draws.is_empty() {
        return Err(Error::InvalidParam("no posterior draws supplied".into()));
    }
    let horizon = grid.horizon();
    let k_max = ctx.k_max();
    let mut acc: Vec<Vec<f64>> = vec![vec![0.0; k_max + 1]; horizon];
    let mut arr = vec![0.0; horizon];
    let mut used_weight = 0.0;
    let mut skipped = 0;

    for draw in draws {
        if draw.weight <= 0.0 {
            continue;
        }
        let Some(init) = ctx.initial_pmf(&draw.params) else {
            skipped += 1;
            continue;
        };
        let res = match run_filter(obs, &draw.params, grid, model, &init, FilterOptions::full()) {
            Ok(r) => r,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if !matches!(res.log_lik, LogLik::Finite(_)) {
            skipped += 1;
            continue;
        }
        for (t, pmf) in res.posteriors.iter().enumerate() {
            let row = &mut acc[t];
            for (slot, &m) in pmf.mass().iter().enumerate() {
                row[slot] += draw.weight * m;
            }
        }
        for (t, step) in res.steps.iter().enumerate() {
            arr[t] += draw.weight * step.arrival_post;
        }
        used_weight += draw.weight;
    }

    if used_weight <= 0.0 {
        return Err(Error::Degenerate("every posterior draw was rejected by the filter".into()));
    }

    let mut profile = StateProfile {
        mean: Vec::with_capacity(horizon),
        p05: Vec::with_capacity(horizon),
        p50: Vec::with_capacity(horizon),
        p95: Vec::with_capacity(horizon),
        arrival_post: arr.iter().map(|a| a / used_weight).collect(),
        skipped_draws: skipped,
    };
    for row in &mut acc {
        for m in row.iter_mut() {
            *m /= used_weight;
        }
        let pmf = QueuePmf::from_mass(row.clone())?;
        profile.mean.push(pmf.mean());
        profile.p05.push(pmf.quantile(0.05));
        profile.p50.push(pmf.quantile(0.50));
        profile.p95.push(pmf.quantile(0.95));
    }
    Ok(profile)
}
