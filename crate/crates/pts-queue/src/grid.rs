//! Discrete time grid and signal timing.
//!
//! Continuous time is discretized so that one step carries at most one
//! arrival and (during green) at most one departure: the step length is the
//! saturation headway of the whole approach, `delta_t = 1 / (q_m * lanes)`
//! with `q_m` the per-lane saturation flow in veh/s. All model code works in
//! steps; seconds only appear at the configuration and reporting boundary.
//!
//! Steps are 1-based: `t` ranges over `1..=horizon`, and `t = 0` denotes the
//! initial state before the first step. Internally, arrays are 0-based and
//! indexed with `t - 1`; that offset is confined to this module and to the
//! storage helpers that document it.

use crate::error::{Error, Result};

/// Signal timing and horizon on the discrete grid.
///
/// A cycle of `cycle_len` steps repeats over the whole horizon. Green spans
/// the phase window `[green_start, green_start + green_len)` where the
/// *phase* of step `t` is `(t - 1) % cycle_len`; every other phase is red
/// (amber is folded into red).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGrid {
    delta_t: f64,
    cycle_len: usize,
    green_start: usize,
    green_len: usize,
    horizon: usize,
}

impl DiscreteGrid {
    /// Build a grid, validating the timing plan.
    pub fn new(
        delta_t: f64,
        cycle_len: usize,
        green_start: usize,
        green_len: usize,
        horizon: usize,
    ) -> Result<Self> {
        if !(delta_t.is_finite() && delta_t > 0.0) {
            return Err(Error::InvalidParam(format!("delta_t must be positive, got {delta_t}")));
        }
        if cycle_len == 0 {
            return Err(Error::InvalidParam("cycle_len must be at least 1 step".into()));
        }
        if green_len == 0 || green_len > cycle_len {
            return Err(Error::InvalidParam(format!(
                "green_len must be in 1..={cycle_len}, got {green_len}"
            )));
        }
        if green_start + green_len > cycle_len {
            return Err(Error::InvalidParam(format!(
                "green window [{green_start}, {}) leaves the cycle of {cycle_len} steps",
                green_start + green_len
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidParam("horizon must be at least 1 step".into()));
        }
        Ok(Self { delta_t, cycle_len, green_start, green_len, horizon })
    }

    /// Step length implied by a per-lane saturation flow `q_m` (veh/s/lane)
    /// and a lane count, so that the approach discharges exactly one vehicle
    /// per green step.
    pub fn delta_t_for_unit_flow(q_m: f64, lanes: u32) -> Result<f64> {
        if !(q_m.is_finite() && q_m > 0.0) {
            return Err(Error::InvalidParam(format!(
                "saturation flow must be positive, got {q_m}"
            )));
        }
        if lanes == 0 {
            return Err(Error::InvalidParam("lane count must be at least 1".into()));
        }
        Ok(1.0 / (q_m * lanes as f64))
    }

    /// Convert a duration in seconds to a whole number of steps, rejecting
    /// durations that are not integral multiples of `delta_t` (within 1e-9
    /// relative) so that timing plans cannot silently drift.
    pub fn seconds_to_steps(delta_t: f64, seconds: f64) -> Result<usize> {
        if !(delta_t.is_finite() && delta_t > 0.0) {
            return Err(Error::InvalidParam(format!("delta_t must be positive, got {delta_t}")));
        }
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "duration must be non-negative, got {seconds}"
            )));
        }
        let ratio = seconds / delta_t;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.abs().max(1.0) {
            return Err(Error::InvalidParam(format!(
                "{seconds} s is not a whole number of {delta_t} s steps"
            )));
        }
        Ok(steps as usize)
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn cycle_len(&self) -> usize {
        self.cycle_len
    }

    pub fn green_start(&self) -> usize {
        self.green_start
    }

    pub fn green_len(&self) -> usize {
        self.green_len
    }

    /// Total number of steps, i.e. `t` runs over `1..=horizon()`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of complete cycles in the horizon.
    pub fn cycles(&self) -> usize {
        self.horizon / self.cycle_len
    }

    /// Phase of step `t` within its cycle, in `0..cycle_len`.
    #[inline]
    pub fn phase(&self, t: usize) -> usize {
        debug_assert!(t >= 1, "steps are 1-based");
        (t - 1) % self.cycle_len
    }

    /// 0-based index of the cycle containing step `t`.
    #[inline]
    pub fn cycle_index(&self, t: usize) -> usize {
        debug_assert!(t >= 1, "steps are 1-based");
        (t - 1) / self.cycle_len
    }

    /// Whether step `t` is green.
    #[inline]
    pub fn is_green(&self, t: usize) -> bool {
        let p = self.phase(t);
        p >= self.green_start && p < self.green_start + self.green_len
    }

    /// Completed green steps of the current green window, *before* step `t`.
    ///
    /// Zero during red and at the green onset itself, then 1, 2, ... across
    /// the window. During green this equals the number of departures the
    /// window has already served when the queue has not emptied, which is why
    /// it doubles as the discharge offset of the stop-position projection.
    #[inline]
    pub fn elapsed_green(&self, t: usize) -> usize {
        let p = self.phase(t);
        if p >= self.green_start && p < self.green_start + self.green_len {
            p - self.green_start
        } else {
            0
        }
    }

    /// Steps `t` at which a green window opens, in increasing order.
    pub fn green_onsets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..).map(|c| c * self.cycle_len + self.green_start + 1).take_while(|&t| t <= self.horizon)
    }

    /// Same timing plan, different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(self.delta_t, self.cycle_len, self.green_start, self.green_len, horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_grid() -> DiscreteGrid {
        // 90 s cycle, green over phases [55, 90), 1 s steps, 4 cycles.
        DiscreteGrid::new(1.0, 90, 55, 35, 360).unwrap()
    }

    #[test]
    fn unit_flow_step_length() {
        assert_eq!(DiscreteGrid::delta_t_for_unit_flow(0.5, 2).unwrap(), 1.0);
        let dt = DiscreteGrid::delta_t_for_unit_flow(0.6, 3).unwrap();
        assert!((dt - 0.5555555555555556).abs() < 1e-15);
        assert!(DiscreteGrid::delta_t_for_unit_flow(0.0, 2).is_err());
        assert!(DiscreteGrid::delta_t_for_unit_flow(0.5, 0).is_err());
    }

    #[test]
    fn seconds_conversion_requires_integral_steps() {
        assert_eq!(DiscreteGrid::seconds_to_steps(1.0, 90.0).unwrap(), 90);
        assert_eq!(DiscreteGrid::seconds_to_steps(0.5, 45.0).unwrap(), 90);
        assert!(DiscreteGrid::seconds_to_steps(1.0, 90.4).is_err());
        // A value off by far less than 1e-9 relative still rounds cleanly.
        assert_eq!(DiscreteGrid::seconds_to_steps(1.0, 90.0 + 1e-12).unwrap(), 90);
    }

    #[test]
    fn phase_and_signal_windows() {
        let g = table_grid();
        assert_eq!(g.phase(1), 0);
        assert_eq!(g.phase(90), 89);
        assert_eq!(g.phase(91), 0);
        assert!(!g.is_green(1));
        assert!(!g.is_green(55)); // phase 54, last red step
        assert!(g.is_green(56)); // phase 55, onset
        assert!(g.is_green(90)); // phase 89, last green step
        assert!(!g.is_green(91)); // next cycle starts red
        assert_eq!(g.cycles(), 4);
        assert_eq!(g.cycle_index(90), 0);
        assert_eq!(g.cycle_index(91), 1);
    }

    #[test]
    fn elapsed_green_counts_completed_steps() {
        let g = table_grid();
        // Red steps report zero.
        assert_eq!(g.elapsed_green(55), 0);
        // Zero at the onset, then one per completed green step.
        assert_eq!(g.elapsed_green(56), 0);
        assert_eq!(g.elapsed_green(56 + 4), 4);
        assert_eq!(g.elapsed_green(90), 34);
    }

    #[test]
    fn green_onsets_enumerate_cycles() {
        let g = table_grid();
        let onsets: Vec<usize> = g.green_onsets().collect();
        assert_eq!(onsets, vec![56, 146, 236, 326]);
    }

    #[test]
    fn rejects_bad_plans() {
        assert!(DiscreteGrid::new(1.0, 90, 60, 35, 360).is_err()); // spills past cycle
        assert!(DiscreteGrid::new(1.0, 90, 0, 0, 360).is_err());
        assert!(DiscreteGrid::new(1.0, 0, 0, 1, 360).is_err());
        assert!(DiscreteGrid::new(0.0, 90, 55, 35, 360).is_err());
        assert!(DiscreteGrid::new(1.0, 90, 55, 35, 0).is_err());
    }
}
