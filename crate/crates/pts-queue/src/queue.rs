//! Queue-length distributions and their one-step transitions.
//!
//! The queue is a non-negative integer `X(t)` capped at `k_max`. One step
//! consists of an arrival sub-step (Bernoulli arrival with the profile rate,
//! shifting mass up by one) followed by a departure sub-step (during green,
//! one vehicle leaves whenever the interim queue is non-empty, shifting mass
//! down by one). The distribution after the arrival but before the departure
//! — the *interim* pmf — is what a newly arrived vehicle samples when it
//! joins the queue, so observation updates attach to it.

use crate::arrival::ArrivalProfile;
use crate::error::{Error, Result};
use crate::grid::DiscreteGrid;

/// Mass that may silently saturate at the cap before a transition is
/// reported as a truncation overflow.
pub const TRUNCATION_TOL: f64 = 1e-6;

/// Probability mass function over queue lengths `0..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueuePmf {
    mass: Vec<f64>,
}

impl QueuePmf {
    /// Point mass at queue length `k`.
    pub fn delta(k: usize, k_max: usize) -> Result<Self> {
        if k > k_max {
            return Err(Error::InvalidParam(format!("delta at {k} exceeds cap {k_max}")));
        }
        let mut mass = vec![0.0; k_max + 1];
        mass[k] = 1.0;
        Ok(Self { mass })
    }

    /// Wrap an explicit mass vector (length `k_max + 1`). The vector must be
    /// non-negative and sum to 1 within 1e-9.
    pub fn from_mass(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidParam("pmf needs at least the zero state".into()));
        }
        let mut sum = 0.0;
        for &m in &mass {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidParam(format!(
                    "pmf entries must be non-negative, got {m}"
                )));
            }
            sum += m;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!("pmf sums to {sum}, expected 1")));
        }
        Ok(Self { mass })
    }

    pub fn k_max(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    #[inline]
    pub fn prob(&self, k: usize) -> f64 {
        self.mass.get(k).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(k, &m)| k as f64 * m).sum()
    }

    /// Smallest `k` whose cumulative mass reaches `q`.
    pub fn quantile(&self, q: f64) -> usize {
        let mut acc = 0.0;
        for (k, &m) in self.mass.iter().enumerate() {
            acc += m;
            if acc >= q {
                return k;
            }
        }
        self.k_max()
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        let n = self.mass.len().max(other.mass.len());
        (0..n).map(|k| (self.prob(k) - other.prob(k)).abs()).sum()
    }

    /// Rescale to total mass 1 (guards against float drift in long runs).
    pub fn renormalize(&mut self) {
        let sum = self.total();
        if sum > 0.0 {
            for m in &mut self.mass {
                *m /= sum;
            }
        }
    }

    /// Arrival sub-step: mix of "shift up by one" (probability `a`) and
    /// "stay" (probability `1 - a`). Mass that the shift would push past the
    /// cap saturates there; if more than [`TRUNCATION_TOL`] of it does, the
    /// cap is too small for the demand and the transition fails.
    pub fn arrival_step(&self, a: f64) -> Result<QueuePmf> {
        if !(a.is_finite() && (0.0..=1.0).contains(&a)) {
            return Err(Error::InvalidParam(format!("arrival probability {a} outside [0, 1]")));
        }
        let k_max = self.k_max();
        let lost = self.mass[k_max] * a;
        if lost > TRUNCATION_TOL {
            return Err(Error::TruncationOverflow { step: 0, k_max, lost });
        }
        let mut out = vec![0.0; k_max + 1];
        out[0] = self.mass[0] * (1.0 - a);
        for k in 1..=k_max {
            out[k] = self.mass[k] * (1.0 - a) + self.mass[k - 1] * a;
        }
        out[k_max] += lost; // saturate the negligible remainder at the cap
        Ok(QueuePmf { mass: out })
    }

    /// Departure sub-step applied to an interim (post-arrival) pmf. During
    /// green every non-empty state sheds one vehicle; during red nothing
    /// moves. Returns the next pmf and the departure probability.
    pub fn departure_step(&self, green: bool) -> (QueuePmf, f64) {
        if !green {
            return (self.clone(), 0.0);
        }
        let k_max = self.k_max();
        let b: f64 = self.mass[1..].iter().sum();
        let mut out = vec![0.0; k_max + 1];
        out[0] = self.mass[0] + self.mass[1];
        for k in 1..k_max {
            out[k] = self.mass[k + 1];
        }
        (QueuePmf { mass: out }, b)
    }
}

/// One full step of the queue recursion.
///
/// Returns `(next, interim, departure_prob)`: the pmf after the step, the
/// interim pmf between the arrival and departure sub-steps, and the
/// probability that a vehicle departed.
pub fn step_pmf(x_prev: &QueuePmf, a: f64, green: bool) -> Result<(QueuePmf, QueuePmf, f64)> {
    let interim = x_prev.arrival_step(a)?;
    let (next, b) = interim.departure_step(green);
    Ok((next, interim, b))
}

/// Cycle-start distribution of the queue under a fixed profile and timing
/// plan, found by iterating whole cycles to a fixed point.
#[derive(Debug, Clone)]
pub struct StationaryStart {
    pub pmf: QueuePmf,
    /// False if the L1 fixed-point tolerance was not reached within the
    /// cycle cap (oversaturated or near-critical demand).
    pub converged: bool,
    /// Cycles actually iterated.
    pub cycles_run: usize,
}

/// L1 fixed-point tolerance for [`stationary_cycle_start`].
pub const STATIONARY_TOL: f64 = 1e-8;
/// Cycle cap for [`stationary_cycle_start`].
pub const STATIONARY_MAX_CYCLES: usize = 200;

/// Iterate the cycle transition from an empty queue until the cycle-start
/// pmf moves less than [`STATIONARY_TOL`] in L1, or [`STATIONARY_MAX_CYCLES`]
/// is hit. Under stable demand the cycle operator is a contraction, so this
/// converges geometrically; unstable demand either overflows the cap (error)
/// or returns `converged = false`.
pub fn stationary_cycle_start(
    profile: &ArrivalProfile,
    grid: &DiscreteGrid,
    k_max: usize,
) -> Result<StationaryStart> {
    let mut cur = QueuePmf::delta(0, k_max)?;
    for cycle in 0..STATIONARY_MAX_CYCLES {
        let mut next = cur.clone();
        for phase in 0..grid.cycle_len() {
            let t = phase + 1; // any first-cycle step carries this phase
            let (stepped, _, _) = step_pmf(&next, profile.rate_at_phase(phase), grid.is_green(t))
                .map_err(|e| match e {
                Error::TruncationOverflow { k_max, lost, .. } => {
                    Error::TruncationOverflow { step: t, k_max, lost }
                }
                other => other,
            })?;
            next = stepped;
        }
        next.renormalize();
        let moved = next.l1_distance(&cur);
        cur = next;
        if moved < STATIONARY_TOL {
            return Ok(StationaryStart { pmf: cur, converged: true, cycles_run: cycle + 1 });
        }
    }
    Ok(StationaryStart { pmf: cur, converged: false, cycles_run: STATIONARY_MAX_CYCLES })
}
