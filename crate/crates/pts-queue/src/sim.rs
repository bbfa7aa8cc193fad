//! Ground-truth simulator.
//!
//! Draws the hidden arrival/queue process exactly as the model defines it
//! (one Bernoulli arrival per step, one departure per green step while the
//! interim queue is non-empty), keeps per-vehicle stop bookkeeping, and
//! derives from it both the probe observation sequence and — on request —
//! sampled trajectories whose encoding reproduces that observation sequence
//! bit for bit.
//!
//! Queue positions are *slots* of one jam spacing per lane, counted from the
//! stop bar and including the vehicle itself. A vehicle joining during green
//! stops behind the part of the queue the window has already served, so its
//! slot is `elapsed_green + interim_queue`. When a green window ends with
//! vehicles still standing, the survivors roll forward to the bar (slots
//! `1..=n` in arrival order) at the red onset; such reshuffles produce the
//! second stop episodes the encoder reports as diagnostics.
//!
//! The horizon is preceded by warm-up cycles (discarded from all outputs)
//! so the window starts from the stationary regime rather than an empty
//! queue.

use rand::Rng;

use crate::arrival::ArrivalProfile;
use crate::encode::{GeometryParams, RawTrajectory, TrajSample};
use crate::error::{Error, Result};
use crate::grid::DiscreteGrid;
use crate::observe::{ObsModel, ObservationSeq};
use crate::rng::{stream, StreamRole};

/// Everything a replication needs.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub grid: DiscreteGrid,
    pub profile: ArrivalProfile,
    /// Probe penetration probability.
    pub phi: f64,
    pub obs_model: ObsModel,
    pub geometry: GeometryParams,
    /// Cycles simulated and discarded before the window starts.
    pub warmup_cycles: usize,
    pub seed: u64,
}

/// Default number of discarded warm-up cycles.
pub const DEFAULT_WARMUP_CYCLES: usize = 50;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi.is_finite() && (0.0..=1.0).contains(&self.phi)) {
            return Err(Error::InvalidParam(format!(
                "penetration must lie in [0, 1], got {}",
                self.phi
            )));
        }
        self.geometry.validate()
    }
}

/// The hidden process over the window.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Queue before step 1 (warm-up residue).
    pub initial_queue: u32,
    /// `arrivals[t-1]` is `A(t)`.
    pub arrivals: Vec<bool>,
    /// `queues[t-1]` is `X(t)`, the queue after step `t`.
    pub queues: Vec<u32>,
    /// Queue at the last red step of each complete cycle — the per-cycle
    /// maximum, since the queue only shrinks once discharge starts.
    pub max_queue_by_cycle: Vec<u32>,
}

/// One in-window vehicle.
#[derive(Debug, Clone)]
pub struct VehicleRecord {
    pub id: String,
    /// Window step of arrival, `1..=horizon`.
    pub arrival_step: usize,
    pub green_at_arrival: bool,
    pub elapsed_at_arrival: usize,
    /// Interim queue at arrival, including this vehicle.
    pub interim_queue: u32,
    /// True if it crossed without stopping (green, empty queue).
    pub passed: bool,
    /// First-stop slot; `None` iff `passed`.
    pub slot: Option<u32>,
    /// Window step it crossed the bar; `None` if still queued at the end.
    pub depart_step: Option<usize>,
    pub observed: bool,
    /// Reported slot if observed (0 for passes, noisy slot for stops).
    pub reported_slot: Option<u32>,
}

/// Simulator output for one replication.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub truth: GroundTruth,
    pub obs: ObservationSeq,
    pub vehicles: Vec<VehicleRecord>,
    /// Trajectories of observed vehicles (empty unless requested). Sample
    /// times are window-relative seconds and may be negative for vehicles
    /// whose approach began before the window.
    pub observed_trajectories: Vec<RawTrajectory>,
}

/// Internal per-vehicle state across warm-up and window.
struct Veh {
    arr_global: usize,
    /// `(global step at whose start the move toward `slot` begins, slot)`;
    /// first entry is the arrival stop, later ones are red-onset roll-ups.
    stops: Vec<(usize, u32)>,
    depart_global: Option<usize>,
    passed: bool,
}

/// Run one replication.
pub fn simulate(cfg: &SimConfig, replication: u64, with_trajectories: bool) -> Result<SimOutput> {
    cfg.validate()?;
    let grid = &cfg.grid;
    let cycle = grid.cycle_len();
    let horizon = grid.horizon();
    let warm_steps = cfg.warmup_cycles * cycle;
    let total = warm_steps + horizon;
    let max_slots = cfg.geometry.max_slots();

    let mut rng_arr = stream(cfg.seed, replication, StreamRole::Arrivals);
    let mut rng_pen = stream(cfg.seed, replication, StreamRole::Penetration);
    let mut rng_noise = stream(cfg.seed, replication, StreamRole::MeasurementNoise);

    let mut vehicles: Vec<Veh> = Vec::new();
    let mut standing: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut x: u32 = 0;
    let mut initial_queue = 0;
    let mut arrivals = vec![false; horizon];
    let mut queues = vec![0u32; horizon];
    // (vehicle index, window step, green, elapsed, interim) of window arrivals.
    let mut window_arrivals: Vec<(usize, usize, bool, usize, u32)> = Vec::new();

    // The phase right after the green window; seeing it means the signal
    // just turned red and the standing queue rolls up to the bar.
    let red_onset_phase = (grid.green_start() + grid.green_len()) % cycle;
    let has_red = grid.green_len() < cycle;

    for tg in 1..=total {
        let phase = (tg - 1) % cycle;
        let green = grid.is_green(tg);
        let elapsed = grid.elapsed_green(tg);

        if has_red && phase == red_onset_phase && tg > 1 {
            for (rank0, &vi) in standing.iter().enumerate() {
                let target = rank0 as u32 + 1;
                let current = vehicles[vi].stops.last().expect("standing vehicles stopped").1;
                if target < current {
                    vehicles[vi].stops.push((tg, target));
                }
            }
        }

        let a = rng_arr.gen_bool(cfg.profile.rate_at_phase(phase));
        let interim = x + a as u32;
        if a {
            let vi = vehicles.len();
            if green && interim == 1 {
                vehicles.push(Veh {
                    arr_global: tg,
                    stops: Vec::new(),
                    depart_global: Some(tg),
                    passed: true,
                });
            } else {
                let slot = elapsed as u32 + interim;
                if slot > max_slots {
                    return Err(Error::SaturationOverflow {
                        step: tg,
                        queue: interim,
                        needed_m: cfg.geometry.slot_to_distance(slot),
                        link_m: cfg.geometry.link_len_m,
                    });
                }
                vehicles.push(Veh {
                    arr_global: tg,
                    stops: vec![(tg, slot)],
                    depart_global: None,
                    passed: false,
                });
                standing.push_back(vi);
            }
            if tg > warm_steps {
                window_arrivals.push((vi, tg - warm_steps, green, elapsed, interim));
            }
        }

        if green && interim >= 1 {
            if a && interim == 1 {
                // The arriving vehicle passed straight through; it never
                // stood, so the standing queue is untouched.
                x = 0;
            } else {
                let front = standing.pop_front().expect("departure from non-empty queue");
                vehicles[front].depart_global = Some(tg);
                x = interim - 1;
            }
        } else {
            x = interim;
        }

        if tg > warm_steps {
            arrivals[tg - warm_steps - 1] = a;
            queues[tg - warm_steps - 1] = x;
        } else if tg == warm_steps {
            initial_queue = x;
        }
    }
    if warm_steps == 0 {
        initial_queue = 0;
    }

    // Per-cycle maxima: the queue right before each green onset.
    let mut max_queue_by_cycle = Vec::with_capacity(grid.cycles());
    for c in 0..grid.cycles() {
        let t = c * cycle + grid.green_start();
        max_queue_by_cycle.push(if t == 0 { initial_queue } else { queues[t - 1] });
    }

    // Observation pass: probe coins in arrival order, then slot noise for
    // observed stoppers.
    let mut events: Vec<(usize, u32)> = Vec::new();
    let mut records: Vec<VehicleRecord> = Vec::with_capacity(window_arrivals.len());
    for &(vi, step, green, elapsed, interim) in &window_arrivals {
        let veh = &vehicles[vi];
        let observed = rng_pen.gen_bool(cfg.phi);
        let reported = if observed {
            let v = cfg.obs_model.sample_slot(green, elapsed, interim, &mut rng_noise);
            events.push((step, v));
            Some(v)
        } else {
            None
        };
        records.push(VehicleRecord {
            id: format!("v{:06}", veh.arr_global),
            arrival_step: step,
            green_at_arrival: green,
            elapsed_at_arrival: elapsed,
            interim_queue: interim,
            passed: veh.passed,
            slot: veh.stops.first().map(|&(_, s)| s),
            depart_step: veh.depart_global.map(|d| d - warm_steps),
            observed,
            reported_slot: reported,
        });
    }
    let obs = ObservationSeq::from_events(horizon, &events)?;

    let observed_trajectories = if with_trajectories {
        let win_start = warm_steps as f64 * grid.delta_t();
        let win_end = horizon as f64 * grid.delta_t();
        records
            .iter()
            .zip(&window_arrivals)
            .filter(|(r, _)| r.observed)
            .map(|(r, &(vi, ..))| {
                synth_trajectory(
                    r,
                    &vehicles[vi],
                    &cfg.geometry,
                    grid.delta_t(),
                    win_start,
                    win_end,
                )
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    Ok(SimOutput {
        truth: GroundTruth { initial_queue, arrivals, queues, max_queue_by_cycle },
        obs,
        vehicles: records,
        observed_trajectories,
    })
}

/// Piecewise-linear position breakpoints `(absolute time s, distance m)`.
fn breakpoints(
    rec: &VehicleRecord,
    veh: &Veh,
    geom: &GeometryParams,
    delta_t: f64,
    win_start: f64,
    win_end: f64,
) -> Vec<(f64, f64)> {
    let v = geom.free_flow_mps;
    let bar = veh.arr_global as f64 * delta_t; // unimpeded bar crossing
    let mut pts: Vec<(f64, f64)> = Vec::new();

    if veh.passed {
        pts.push((bar - geom.link_len_m / v, geom.link_len_m));
        pts.push((bar, 0.0));
        return pts;
    }

    // First stop at the *reported* position for observed trajectories, so
    // that measurement noise lives in the trace itself and encoding gets
    // back exactly what the observation sequence says.
    let d1 = geom.slot_to_distance(rec.reported_slot.unwrap_or_else(|| rec.slot.unwrap()));
    let s1 = bar - d1 / v;
    pts.push((s1 - (geom.link_len_m - d1) / v, geom.link_len_m));
    pts.push((s1, d1));
    let mut cur = d1;

    // Red-onset roll-ups; skip any that would move the (noisy) position
    // backwards.
    for &(onset_global, slot) in veh.stops.iter().skip(1) {
        let target = geom.slot_to_distance(slot);
        if target >= cur {
            continue;
        }
        let move_start = (onset_global - 1) as f64 * delta_t;
        pts.push((move_start, cur));
        pts.push((move_start + (cur - target) / v, target));
        cur = target;
    }

    match veh.depart_global {
        Some(td) => {
            let td_s = td as f64 * delta_t;
            let release = td_s - cur / v;
            if release > pts.last().unwrap().0 {
                pts.push((release, cur));
            }
            pts.push((td_s, 0.0));
        }
        None => {
            // Still standing at the window end: hold through it.
            pts.push((win_start + win_end + 1.0, cur));
        }
    }
    pts
}

/// Sample a breakpoint path on the cadence grid, clipped to the link and to
/// the window's end (the start is not clipped: early arrivals legitimately
/// carry pre-window samples).
fn synth_trajectory(
    rec: &VehicleRecord,
    veh: &Veh,
    geom: &GeometryParams,
    delta_t: f64,
    win_start: f64,
    win_end: f64,
) -> Result<RawTrajectory> {
    let pts = breakpoints(rec, veh, geom, delta_t, win_start, win_end);
    debug_assert!(pts.windows(2).all(|w| w[1].0 > w[0].0), "{}: {pts:?}", rec.id);

    let mut samples = Vec::new();
    let mut seg = 0;
    let first_k = (((pts[0].0 - win_start) / geom.sample_dt_s).floor() as i64).max(i64::MIN + 1);
    let mut k = first_k;
    loop {
        let tw = k as f64 * geom.sample_dt_s;
        if tw > win_end + 1e-9 {
            break;
        }
        let t_abs = win_start + tw;
        k += 1;
        if t_abs < pts[0].0 {
            continue;
        }
        while seg + 1 < pts.len() && pts[seg + 1].0 < t_abs {
            seg += 1;
        }
        if seg + 1 >= pts.len() {
            break; // beyond the path (crossed the bar)
        }
        let (t0, d0) = pts[seg];
        let (t1, d1) = pts[seg + 1];
        let d = d0 + (t_abs - t0) / (t1 - t0) * (d1 - d0);
        if d > geom.link_len_m + 1e-9 {
            continue; // not on the link yet
        }
        if d < -1e-9 {
            break;
        }
        samples.push(TrajSample { time_s: tw, dist_m: d.max(0.0) });
    }
    if samples.is_empty() {
        return Err(Error::Numerical(format!("vehicle {} produced no on-link samples", rec.id)));
    }
    Ok(RawTrajectory { vehicle_id: rec.id.clone(), samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::encode;
    use crate::kernel::GaussKernel;
    use crate::queue::stationary_cycle_start;

    fn table_geom() -> GeometryParams {
        GeometryParams {
            lanes: 2,
            jam_spacing_m: 7.5,
            link_len_m: 250.0,
            free_flow_mps: 15.0,
            sample_dt_s: 0.5,
        }
    }

    fn config(rate: f64, phi: f64, sigma: f64, h: usize, cycles: usize) -> SimConfig {
        SimConfig {
            grid: DiscreteGrid::new(1.0, 90, 55, 35, 90 * cycles).unwrap(),
            profile: ArrivalProfile::uniform(rate).unwrap(),
            phi,
            obs_model: ObsModel::new(GaussKernel::new(sigma, h).unwrap()),
            geometry: table_geom(),
            warmup_cycles: 50,
            seed: 11,
        }
    }

    #[test]
    fn deterministic_per_seed_and_replication() {
        let cfg = config(0.2, 0.3, 1.0, 2, 4);
        let a = simulate(&cfg, 5, false).unwrap();
        let b = simulate(&cfg, 5, false).unwrap();
        assert_eq!(a.truth.queues, b.truth.queues);
        assert_eq!(a.obs, b.obs);
        let c = simulate(&cfg, 6, false).unwrap();
        assert_ne!(a.truth.queues, c.truth.queues);
    }

    #[test]
    fn queue_recursion_holds() {
        let cfg = config(0.25, 0.2, 1.0, 2, 12);
        let out = simulate(&cfg, 0, false).unwrap();
        let grid = &cfg.grid;
        let mut x = out.truth.initial_queue;
        for t in 1..=grid.horizon() {
            let interim = x + out.truth.arrivals[t - 1] as u32;
            let departed = grid.is_green(t) && interim >= 1;
            x = interim - departed as u32;
            assert_eq!(out.truth.queues[t - 1], x, "step {t}");
        }
    }

    #[test]
    fn stop_slots_match_projection_and_passes_need_empty_green() {
        let cfg = config(0.25, 1.0, 0.0, 0, 12);
        let out = simulate(&cfg, 1, false).unwrap();
        assert!(!out.vehicles.is_empty());
        for rec in &out.vehicles {
            if rec.passed {
                assert!(rec.green_at_arrival && rec.interim_queue == 1);
                assert_eq!(rec.reported_slot, Some(0));
            } else {
                let expect = rec.elapsed_at_arrival as u32 + rec.interim_queue;
                assert_eq!(rec.slot, Some(expect), "vehicle {}", rec.id);
                // Noise-free, full penetration: reported slot is the truth.
                assert_eq!(rec.reported_slot, Some(expect));
            }
        }
    }

    #[test]
    fn max_queue_by_cycle_is_the_pre_onset_queue() {
        let cfg = config(0.25, 0.2, 1.0, 2, 8);
        let out = simulate(&cfg, 2, false).unwrap();
        assert_eq!(out.truth.max_queue_by_cycle.len(), 8);
        for (c, &m) in out.truth.max_queue_by_cycle.iter().enumerate() {
            let t = c * 90 + 55;
            assert_eq!(m, out.truth.queues[t - 1]);
            // The queue grows through red and shrinks through green, so the
            // pre-onset value is the whole cycle's maximum.
            let max_in_cycle = (c * 90..(c + 1) * 90).map(|i| out.truth.queues[i]).max().unwrap();
            assert_eq!(m, max_in_cycle, "cycle {c}");
        }
    }

    #[test]
    fn arrival_rate_and_penetration_are_calibrated() {
        let cfg = config(0.2, 0.3, 1.0, 2, 40);
        let mut arrivals = 0usize;
        let mut observed = 0usize;
        let mut steps = 0usize;
        for rep in 0..5 {
            let out = simulate(&cfg, rep, false).unwrap();
            arrivals += out.truth.arrivals.iter().filter(|&&a| a).count();
            observed += out.obs.observed_count();
            steps += cfg.grid.horizon();
        }
        let rate = arrivals as f64 / steps as f64;
        assert!((rate - 0.2).abs() < 0.01, "rate {rate}");
        let pen = observed as f64 / arrivals as f64;
        assert!((pen - 0.3).abs() < 0.03, "pen {pen}");
    }

    #[test]
    fn initial_queue_matches_stationary_law() {
        let cfg = config(0.2, 0.0, 0.0, 0, 1);
        let st = stationary_cycle_start(&cfg.profile, &cfg.grid, 90).unwrap();
        assert!(st.converged);
        let expect_mean = st.pmf.mean();
        let var: f64 = st
            .pmf
            .mass()
            .iter()
            .enumerate()
            .map(|(k, &m)| (k as f64 - expect_mean).powi(2) * m)
            .sum();
        let n = 400;
        let mean: f64 = (0..n)
            .map(|rep| simulate(&cfg, rep as u64, false).unwrap().truth.initial_queue as f64)
            .sum::<f64>()
            / n as f64;
        let tol = 4.0 * (var / n as f64).sqrt();
        assert!(
            (mean - expect_mean).abs() < tol,
            "empirical {mean}, stationary {expect_mean}, tol {tol}"
        );
    }

    #[test]
    fn trajectories_encode_back_to_the_observation_sequence() {
        // Moderate demand with noise: round trip through trajectory
        // synthesis and encoding must reproduce the observations exactly.
        let cfg = config(0.25, 0.5, 1.0, 2, 20);
        let out = simulate(&cfg, 3, true).unwrap();
        assert!(out.obs.observed_count() > 20);
        let enc = encode(&out.observed_trajectories, &cfg.geometry, &cfg.grid).unwrap();
        assert_eq!(enc.seq, out.obs);
        assert!(enc.diagnostics.skipped_no_prestop.is_empty());
        assert!(enc.diagnostics.skipped_out_of_window.is_empty());
    }

    #[test]
    fn near_capacity_round_trip_with_reshuffles() {
        // Demand near capacity: some cycles overflow their green, vehicles
        // roll forward at red onsets, and the encoder sees second stop
        // episodes — but first stops still encode exactly.
        let cfg = config(0.36, 0.6, 1.0, 2, 30);
        let out = simulate(&cfg, 7, true).unwrap();
        let enc = encode(&out.observed_trajectories, &cfg.geometry, &cfg.grid).unwrap();
        assert_eq!(enc.seq, out.obs);
        // The scenario really exercised multi-cycle waits.
        assert!(
            !enc.diagnostics.extra_stops.is_empty(),
            "expected at least one reshuffled vehicle"
        );
    }

    #[test]
    fn saturation_overflow_is_reported() {
        let mut cfg = config(0.5, 0.0, 0.0, 0, 4);
        cfg.geometry.link_len_m = 15.0; // 4 slots
        match simulate(&cfg, 0, false) {
            Err(Error::SaturationOverflow { queue, .. }) => assert!(queue >= 4),
            other => panic!("expected saturation overflow, got {other:?}"),
        }
    }
}
