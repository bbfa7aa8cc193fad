//! Evaluation statistics for estimation studies.

use crate::error::{Error, Result};

use super::summary::CredInterval;

/// Mean absolute percentage error over paired estimates and truths.
#[derive(Debug, Clone, Copy)]
pub struct ErrorStats {
    pub mape: f64,
    /// Pairs that entered the average.
    pub used: usize,
    /// Pairs dropped because the truth was zero (undefined relative error).
    pub skipped_zero: usize,
}

pub fn mape(estimates: &[f64], truths: &[f64]) -> Result<ErrorStats> {
    if estimates.len() != truths.len() {
        return Err(Error::InvalidParam(format!(
            "{} estimates against {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    let mut sum = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for (&e, &t) in estimates.iter().zip(truths) {
        if t == 0.0 {
            skipped += 1;
            continue;
        }
        sum += ((e - t) / t).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::Degenerate(
            "every truth value is zero; relative error is undefined".into(),
        ));
    }
    Ok(ErrorStats { mape: sum / used as f64, used, skipped_zero: skipped })
}

/// Average width and empirical coverage of credible intervals.
#[derive(Debug, Clone, Copy)]
pub struct IntervalStats {
    /// Mean interval width.
    pub awci: f64,
    /// Fraction of truths inside their interval.
    pub coverage: f64,
}

pub fn interval_stats(intervals: &[CredInterval], truths: &[f64]) -> Result<IntervalStats> {
    if intervals.len() != truths.len() {
        return Err(Error::InvalidParam(format!(
            "{} intervals against {} truths",
            intervals.len(),
            truths.len()
        )));
    }
    if intervals.is_empty() {
        return Err(Error::InvalidParam("no intervals to score".into()));
    }
    let n = intervals.len() as f64;
    let awci = intervals.iter().map(|iv| iv.width()).sum::<f64>() / n;
    let covered = intervals.iter().zip(truths).filter(|(iv, &t)| iv.contains(t)).count();
    Ok(IntervalStats { awci, coverage: covered as f64 / n })
}
