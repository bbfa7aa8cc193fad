//! Raw probe trajectories and their reduction to per-step observations.
//!
//! A trajectory is a sampled path of distance-to-stop-bar over time. The
//! encoder turns each one into the pair the model consumes: the step at
//! which the vehicle would have reached the bar unimpeded (its *arrival
//! step*), and its first stop position expressed in slots of one jam spacing
//! per lane (0 when it never stopped). The arrival step comes from
//! projecting the last free-flow sample forward at free-flow speed, so the
//! estimate is exact whenever the approach really was unimpeded — which the
//! queue model guarantees upstream of the stopped queue.

use crate::error::{Error, Result};
use crate::grid::DiscreteGrid;
use crate::observe::ObservationSeq;

/// Fixed approach geometry (not estimated).
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryParams {
    /// Lane count of the approach.
    pub lanes: u32,
    /// Jam spacing per vehicle per lane, meters.
    pub jam_spacing_m: f64,
    /// Distance from the upstream entry to the stop bar, meters.
    pub link_len_m: f64,
    /// Free-flow speed, m/s.
    pub free_flow_mps: f64,
    /// Trajectory sample cadence, seconds.
    pub sample_dt_s: f64,
}

impl GeometryParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("jam_spacing_m", self.jam_spacing_m),
            ("link_len_m", self.link_len_m),
            ("free_flow_mps", self.free_flow_mps),
            ("sample_dt_s", self.sample_dt_s),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        if self.lanes == 0 {
            return Err(Error::InvalidParam("lanes must be at least 1".into()));
        }
        Ok(())
    }

    /// Meters of link one queue slot occupies: the queue spreads over all
    /// lanes, so slots advance by `jam_spacing / lanes` along the link.
    pub fn slot_spacing_m(&self) -> f64 {
        self.jam_spacing_m / self.lanes as f64
    }

    /// Stop-bar distance of the vehicle standing in `slot` (1-based; the
    /// slot count includes the vehicle itself).
    pub fn slot_to_distance(&self, slot: u32) -> f64 {
        slot as f64 * self.slot_spacing_m()
    }

    /// Nearest slot for a measured stop distance.
    pub fn distance_to_slot(&self, dist_m: f64) -> u32 {
        (dist_m / self.slot_spacing_m()).round().max(0.0) as u32
    }

    /// Largest slot that still fits on the link.
    pub fn max_slots(&self) -> u32 {
        (self.link_len_m / self.slot_spacing_m() + 1e-9).floor() as u32
    }
}

/// One sampled trajectory point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajSample {
    pub time_s: f64,
    /// Distance to the stop bar, meters (decreases as the vehicle advances).
    pub dist_m: f64,
}

/// A probe vehicle's sampled approach.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub vehicle_id: String,
    pub samples: Vec<TrajSample>,
}

impl RawTrajectory {
    /// Validated constructor: at least one sample, strictly increasing times.
    pub fn new(vehicle_id: String, samples: Vec<TrajSample>) -> Result<Self> {
        let traj = RawTrajectory { vehicle_id, samples };
        traj.check()?;
        Ok(traj)
    }

    fn check(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::InvalidInput {
                path: None,
                line: None,
                msg: format!("vehicle {}: empty trajectory", self.vehicle_id),
            });
        }
        for w in self.samples.windows(2) {
            if w[1].time_s <= w[0].time_s {
                return Err(Error::InvalidInput {
                    path: None,
                    line: None,
                    msg: format!(
                        "vehicle {}: sample times must increase strictly ({} then {})",
                        self.vehicle_id, w[0].time_s, w[1].time_s
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Below this speed a vehicle counts as stopped.
pub const STOP_SPEED_MPS: f64 = 1.0;

/// Per-run encoder bookkeeping that is interesting but not fatal.
#[derive(Debug, Clone, Default)]
pub struct EncodeDiagnostics {
    /// Vehicles dropped because no sample preceded their first stop.
    pub skipped_no_prestop: Vec<String>,
    /// Vehicles dropped because their implied arrival lands outside the
    /// horizon.
    pub skipped_out_of_window: Vec<String>,
    /// Vehicles with stop episodes beyond the first (queue reshuffles,
    /// multi-cycle waits); `(vehicle, extra episode count)`.
    pub extra_stops: Vec<(String, usize)>,
}

/// Encoder output: the observation sequence plus diagnostics.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub seq: ObservationSeq,
    pub diagnostics: EncodeDiagnostics,
}

/// Maximal runs of consecutive below-threshold inter-sample speeds. Each run
/// is returned as a sample index range `[start, end]` (inclusive) covering
/// at least two samples.
fn stop_episodes(samples: &[TrajSample]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..samples.len().saturating_sub(1) {
        let dt = samples[i + 1].time_s - samples[i].time_s;
        let speed = (samples[i].dist_m - samples[i + 1].dist_m).abs() / dt;
        if speed < STOP_SPEED_MPS {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            runs.push((s, i));
        }
    }
    if let Some(s) = start {
        runs.push((s, samples.len() - 1));
    }
    runs
}

/// What one trajectory contributes before collision checks.
#[derive(Debug)]
enum Reading {
    Event { step: usize, slot: u32 },
    Skipped(SkipReason),
}

#[derive(Debug)]
enum SkipReason {
    NoPrestop,
    OutOfWindow,
}

fn read_one(
    traj: &RawTrajectory,
    geom: &GeometryParams,
    grid: &DiscreteGrid,
    extra_stops: &mut Vec<(String, usize)>,
) -> Result<Reading> {
    traj.check()?;
    let episodes = stop_episodes(&traj.samples);
    if episodes.len() > 1 {
        extra_stops.push((traj.vehicle_id.clone(), episodes.len() - 1));
    }

    // Anchor: last sample still in free flow before the first stop; for a
    // vehicle that never stopped, the first sample on the approach.
    let (anchor_idx, slot) = match episodes.first() {
        Some(&(start, end)) => {
            if start == 0 {
                return Ok(Reading::Skipped(SkipReason::NoPrestop));
            }
            // The vehicle is surely at rest by the episode's last sample.
            let slot = geom.distance_to_slot(traj.samples[end].dist_m);
            (start - 1, slot)
        }
        None => (0, 0),
    };

    let anchor = traj.samples[anchor_idx];
    let implied_arrival_s = anchor.time_s + anchor.dist_m / geom.free_flow_mps;
    let step = (implied_arrival_s / grid.delta_t()).round();
    if step < 1.0 || step > grid.horizon() as f64 {
        return Ok(Reading::Skipped(SkipReason::OutOfWindow));
    }
    Ok(Reading::Event { step: step as usize, slot })
}

/// Encode a batch of trajectories into one observation sequence on `grid`.
///
/// Two trajectories implying the same arrival step cannot be represented
/// (the model has at most one arrival per step) and abort with
/// [`Error::ArrivalCollision`].
pub fn encode(
    trajectories: &[RawTrajectory],
    geom: &GeometryParams,
    grid: &DiscreteGrid,
) -> Result<Encoded> {
    geom.validate()?;
    let mut diagnostics = EncodeDiagnostics::default();
    let mut by_step: Vec<Option<usize>> = vec![None; grid.horizon() + 1];
    let mut events = Vec::new();

    for (idx, traj) in trajectories.iter().enumerate() {
        match read_one(traj, geom, grid, &mut diagnostics.extra_stops)? {
            Reading::Event { step, slot } => {
                if let Some(prev) = by_step[step] {
                    return Err(Error::ArrivalCollision {
                        step,
                        first: trajectories[prev].vehicle_id.clone(),
                        second: traj.vehicle_id.clone(),
                    });
                }
                by_step[step] = Some(idx);
                events.push((step, slot));
            }
            Reading::Skipped(SkipReason::NoPrestop) => {
                diagnostics.skipped_no_prestop.push(traj.vehicle_id.clone());
            }
            Reading::Skipped(SkipReason::OutOfWindow) => {
                diagnostics.skipped_out_of_window.push(traj.vehicle_id.clone());
            }
        }
    }

    events.sort_unstable();
    Ok(Encoded { seq: ObservationSeq::from_events(grid.horizon(), &events)?, diagnostics })
}
