//! Probe-vehicle observation model.
//!
//! Each vehicle is a probe independently with penetration probability `phi`.
//! An observed arrival at step `t` reports a stop position expressed in jam
//! spacings from the stop bar — a *slot*. The slot a stopping vehicle
//! occupies is the discharge offset of the current green window plus the
//! interim queue length including the vehicle itself; a probe that sails
//! through a green without stopping reports slot 0. Reported slots of
//! stopping vehicles carry discrete Gaussian noise, truncated below at 1 so
//! that a stop can never masquerade as a free-flow pass.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::GaussKernel;

/// Per-step record of what probes reported over a horizon.
///
/// `a_tilde[t-1]` says whether an observed (probe) arrival happened at step
/// `t`; `x_tilde[t-1]` carries its reported slot and is `Some` exactly where
/// `a_tilde` is true.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeq {
    a_tilde: Vec<bool>,
    x_tilde: Vec<Option<u32>>,
}

impl ObservationSeq {
    pub fn new(a_tilde: Vec<bool>, x_tilde: Vec<Option<u32>>) -> Result<Self> {
        if a_tilde.len() != x_tilde.len() {
            return Err(Error::InvalidInput {
                path: None,
                line: None,
                msg: format!(
                    "arrival flags and slots disagree in length: {} vs {}",
                    a_tilde.len(),
                    x_tilde.len()
                ),
            });
        }
        for (i, (&a, x)) in a_tilde.iter().zip(&x_tilde).enumerate() {
            if a != x.is_some() {
                return Err(Error::InvalidInput {
                    path: None,
                    line: None,
                    msg: format!(
                        "step {}: reported slot must be present exactly for observed arrivals",
                        i + 1
                    ),
                });
            }
        }
        Ok(Self { a_tilde, x_tilde })
    }

    /// A horizon with no observed arrivals at all.
    pub fn empty(horizon: usize) -> Self {
        Self { a_tilde: vec![false; horizon], x_tilde: vec![None; horizon] }
    }

    /// Build from `(step, slot)` events on an otherwise empty horizon.
    pub fn from_events(horizon: usize, events: &[(usize, u32)]) -> Result<Self> {
        let mut seq = Self::empty(horizon);
        for &(t, slot) in events {
            if t < 1 || t > horizon {
                return Err(Error::InvalidInput {
                    path: None,
                    line: None,
                    msg: format!("observation step {t} outside 1..={horizon}"),
                });
            }
            if seq.a_tilde[t - 1] {
                return Err(Error::InvalidInput {
                    path: None,
                    line: None,
                    msg: format!("duplicate observation at step {t}"),
                });
            }
            seq.a_tilde[t - 1] = true;
            seq.x_tilde[t - 1] = Some(slot);
        }
        Ok(seq)
    }

    pub fn horizon(&self) -> usize {
        self.a_tilde.len()
    }

    /// Whether a probe arrival was reported at step `t` (1-based).
    #[inline]
    pub fn arrival(&self, t: usize) -> bool {
        self.a_tilde[t - 1]
    }

    /// Reported slot at step `t`, if a probe arrived there.
    #[inline]
    pub fn slot(&self, t: usize) -> Option<u32> {
        self.x_tilde[t - 1]
    }

    pub fn observed_count(&self) -> usize {
        self.a_tilde.iter().filter(|&&a| a).count()
    }

    /// `(step, slot)` pairs of all observed arrivals, in step order.
    pub fn events(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.x_tilde.iter().enumerate().filter_map(|(i, x)| x.map(|slot| (i + 1, slot)))
    }

    /// Restrict to the first `horizon` steps.
    pub fn truncated(&self, horizon: usize) -> Self {
        Self {
            a_tilde: self.a_tilde[..horizon.min(self.a_tilde.len())].to_vec(),
            x_tilde: self.x_tilde[..horizon.min(self.x_tilde.len())].to_vec(),
        }
    }
}

/// Probability of the reported arrival indicator given the true one.
/// Unobserved vehicles leave no trace; false positives do not occur.
#[inline]
pub fn arrival_obs_prob(a_true: bool, a_reported: bool, phi: f64) -> f64 {
    match (a_true, a_reported) {
        (true, true) => phi,
        (true, false) => 1.0 - phi,
        (false, true) => 0.0,
        (false, false) => 1.0,
    }
}

/// Posterior probability that a vehicle arrived at a step, given whether a
/// probe arrival was reported there. Reported arrivals are certain; silence
/// only partially rules an arrival out.
pub fn arrival_posterior(a: f64, phi: f64, a_reported: bool) -> Result<f64> {
    if a_reported {
        return Ok(1.0);
    }
    let denom = 1.0 - a * phi;
    if denom <= 0.0 {
        // a = phi = 1: every step would be observed, so silence is impossible.
        return Err(Error::Degenerate(
            "silent step has probability zero when arrival and penetration are both certain".into(),
        ));
    }
    Ok(a * (1.0 - phi) / denom)
}

/// Slot-measurement model shared by the simulator, the filter, and the
/// exhaustive reference implementations.
#[derive(Debug, Clone)]
pub struct ObsModel {
    kernel: GaussKernel,
    /// `trunc_norm[m - 1]` is the total kernel mass on reported slots `>= 1`
    /// for a true slot `m` in `1..=half_width`; beyond that the truncation
    /// is inactive and the normalizer is exactly 1.
    trunc_norm: Vec<f64>,
}

impl ObsModel {
    pub fn new(kernel: GaussKernel) -> Self {
        let h = kernel.half_width() as i64;
        let trunc_norm = (1..=h)
            .map(|m| (-h..=h).filter(|c| m + c >= 1).map(|c| kernel.weight(c)).sum())
            .collect();
        Self { kernel, trunc_norm }
    }

    pub fn kernel(&self) -> &GaussKernel {
        &self.kernel
    }

    /// True slot of a vehicle that joins an interim queue of `interim_queue`
    /// (which counts the vehicle itself) when the current green window has
    /// already discharged `elapsed_green` vehicles-worth of steps.
    #[inline]
    pub fn slot_mean(elapsed_green: usize, interim_queue: u32) -> u32 {
        elapsed_green as u32 + interim_queue
    }

    #[inline]
    fn stop_norm(&self, m: u32) -> f64 {
        let h = self.kernel.half_width() as u32;
        if m > h {
            1.0
        } else {
            self.trunc_norm[(m - 1) as usize]
        }
    }

    /// Probability that a stopping vehicle with true slot `m >= 1` reports
    /// slot `v`. Zero for `v = 0`: the truncated kernel keeps stops visible.
    #[inline]
    pub fn stop_prob(&self, m: u32, v: u32) -> f64 {
        if v == 0 {
            return 0.0;
        }
        let w = self.kernel.weight(v as i64 - m as i64);
        if w == 0.0 {
            0.0
        } else {
            w / self.stop_norm(m)
        }
    }

    /// Probability that an observed arrival reports slot `v`, given the
    /// signal state and the interim queue `k` it joined (`k` includes the
    /// vehicle, so `k >= 1` whenever an arrival actually happened).
    ///
    /// During green a vehicle joining an otherwise empty queue (`k = 1`)
    /// passes without stopping and reports slot 0 surely; every other case
    /// is a stop at slot `elapsed_green + k` read through the noise kernel.
    #[inline]
    pub fn queue_obs_prob(&self, green: bool, elapsed_green: usize, k: u32, v: u32) -> f64 {
        if k == 0 {
            return 0.0; // an arrival implies it joined some queue
        }
        if green && k == 1 {
            return if v == 0 { 1.0 } else { 0.0 };
        }
        self.stop_prob(Self::slot_mean(elapsed_green, k), v)
    }

    /// Draw a reported slot for an observed arrival.
    pub fn sample_slot<R: Rng + ?Sized>(
        &self,
        green: bool,
        elapsed_green: usize,
        k: u32,
        rng: &mut R,
    ) -> u32 {
        debug_assert!(k >= 1);
        if green && k == 1 {
            return 0;
        }
        let m = Self::slot_mean(elapsed_green, k);
        let h = self.kernel.half_width() as i64;
        let lo = (m as i64 - h).max(1);
        let hi = m as i64 + h;
        let norm = self.stop_norm(m);
        let mut u = rng.gen::<f64>() * norm;
        for v in lo..=hi {
            u -= self.kernel.weight(v - m as i64);
            if u <= 0.0 {
                return v as u32;
            }
        }
        hi as u32 // float leftovers land on the last support point
    }
}

/// Likelihood of one step's queue report given the true situation: absent
/// reports are certain for silent steps, impossible for observed ones, and
/// reported slots are scored by the stop/pass model.
pub fn obs_queue_prob(
    model: &ObsModel,
    green: bool,
    elapsed_green: usize,
    interim_queue: u32,
    a_reported: bool,
    reported_slot: Option<u32>,
) -> f64 {
    match (a_reported, reported_slot) {
        (false, None) => 1.0,
        (false, Some(_)) | (true, None) => 0.0,
        (true, Some(v)) => model.queue_obs_prob(green, elapsed_green, interim_queue, v),
    }
}
