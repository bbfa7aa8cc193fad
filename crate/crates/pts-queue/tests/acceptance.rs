//! End-to-end acceptance gates for the whole toolkit.
//!
//! Each gate prints one `PASS`/`FAIL` line (visible with
//! `cargo test --test acceptance -- --show-output`) and the test fails if
//! any gate does. The gates intentionally re-derive their expectations from
//! scratch — exhaustive enumeration, long replicated studies, cross-method
//! agreement — rather than reusing the unit-test fixtures.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use pts_queue::arrival::ArrivalProfile;
use pts_queue::config::RunConfig;
use pts_queue::encode::encode;
use pts_queue::filter::{run_filter, FilterOptions, LogLik};
use pts_queue::grid::DiscreteGrid;
use pts_queue::harness::{calibration_study, max_queue_study, StudySettings};
use pts_queue::inference::{
    grid_posterior, importance_sample, map_fit, run_mcmc, weighted_hdi, weighted_mean, weighted_sd,
    FitOptions, LaplaceApprox, LikelihoodContext, McmcOptions, PHI_MIN, RATE_MAX,
};
use pts_queue::kernel::GaussKernel;
use pts_queue::observe::{ObsModel, ObservationSeq};
use pts_queue::oracle::enumerate_filter;
use pts_queue::params::TrafficParams;
use pts_queue::queue::{stationary_cycle_start, QueuePmf};
use pts_queue::sim::{simulate, SimConfig};

fn gate(n: u32, name: &str, body: impl FnOnce() -> String) -> bool {
    let started = Instant::now();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(detail) => {
            println!("criterion {n} ({name}): PASS [{:.1?}] {detail}", started.elapsed());
            true
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            println!("criterion {n} ({name}): FAIL [{:.1?}] {msg}", started.elapsed());
            false
        }
    }
}

/// Runs every gate; set `ACCEPTANCE_ONLY=1,5` to re-check a subset.
#[test]
fn acceptance_gates() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let gates: [(u32, &str, fn() -> String); 7] = [
        (1, "exact equivalence with brute-force enumeration", c1_oracle_equivalence),
        (2, "parameter calibration at reference scenario", c2_calibration),
        (3, "credible intervals shrink with more data", c3_shrinkage),
        (4, "error falls with volume and penetration", c4_monotonicity),
        (5, "grid, importance and MCMC posteriors agree", c5_method_agreement),
        (6, "piecewise demand profile recovery", c6_piecewise_recovery),
        (7, "structural invariants", c7_invariants),
    ];
    let mut all = true;
    for (n, name, body) in gates {
        if only.as_ref().is_some_and(|v| !v.contains(&n)) {
            println!("criterion {n} ({name}): SKIPPED");
            continue;
        }
        all &= gate(n, name, body);
    }
    assert!(all, "at least one acceptance criterion failed");
}

/// Sample one observation sequence from the generative model itself, so the
/// data is consistent by construction.
fn sample_observations(
    grid: &DiscreteGrid,
    params: &TrafficParams,
    model: &ObsModel,
    init: &QueuePmf,
    rng: &mut ChaCha12Rng,
) -> ObservationSeq {
    let mut u = rng.gen::<f64>();
    let mut x = 0u32;
    for (k, &w) in init.mass().iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            x = k as u32;
            break;
        }
    }
    let mut events = Vec::new();
    for t in 1..=grid.horizon() {
        let rate = params.profile.rate_at(t, grid);
        let arrived = rate > 0.0 && rng.gen_bool(rate);
        let interim = x + arrived as u32;
        if arrived && rng.gen_bool(params.phi) {
            let slot = model.sample_slot(grid.is_green(t), grid.elapsed_green(t), interim, rng);
            events.push((t, slot));
        }
        x = interim - (grid.is_green(t) && interim >= 1) as u32;
    }
    ObservationSeq::from_events(grid.horizon(), &events).unwrap()
}

/// Criterion 1: on randomized tiny instances the forward filter reproduces
/// exhaustive enumeration — log likelihood within 1e-8 and every per-step
/// posterior within total-variation 1e-9 — in under ten seconds.
fn c1_oracle_equivalence() -> String {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0x0acc);
    let mut max_dll = 0.0f64;
    let mut max_tv = 0.0f64;
    let instances = 200;

    for _ in 0..instances {
        let cycle = rng.gen_range(2..=8usize);
        let green_len = rng.gen_range(1..=cycle);
        let green_start = rng.gen_range(0..=cycle - green_len);
        let horizon = rng.gen_range(1..=10usize);
        let grid = DiscreteGrid::new(1.0, cycle, green_start, green_len, horizon).unwrap();

        let a = match rng.gen_range(0..20) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen::<f64>(),
        };
        let phi = if rng.gen_range(0..10) == 0 { 1.0 } else { rng.gen_range(0.05..1.0) };
        let params = TrafficParams::new(ArrivalProfile::uniform(a).unwrap(), phi).unwrap();

        let h = rng.gen_range(0..=2usize);
        let sd = if h == 0 { 0.0 } else { rng.gen_range(0.3..2.0) };
        let model = ObsModel::new(GaussKernel::new(sd, h).unwrap());

        // Random initial pmf on 0..=k0, padded so the filter's cap and the
        // unbounded enumeration can never disagree about support.
        let k0 = rng.gen_range(0..=6usize);
        let mut mass = vec![0.0; k0 + horizon + 3];
        for m in mass.iter_mut().take(k0 + 1) {
            *m = rng.gen::<f64>() + 0.01;
        }
        let total: f64 = mass.iter().sum();
        for m in &mut mass {
            *m /= total;
        }
        let init = QueuePmf::from_mass(mass).unwrap();

        let obs = sample_observations(&grid, &params, &model, &init, &mut rng);
        let fast = run_filter(&obs, &params, &grid, &model, &init, FilterOptions::full()).unwrap();
        let ll = match fast.log_lik {
            LogLik::Finite(l) => l,
            LogLik::Impossible { step } => {
                panic!("model-sampled data deemed impossible at step {step}")
            }
        };

        let exact = enumerate_filter(&obs, &params, &grid, &model, &init).unwrap();
        let dll = (ll - exact.log_lik).abs();
        assert!(dll < 1e-8, "log-likelihood off by {dll}");
        max_dll = max_dll.max(dll);

        for t in 1..=horizon {
            let sub = enumerate_filter(
                &obs.truncated(t),
                &params,
                &grid.with_horizon(t).unwrap(),
                &model,
                &init,
            )
            .unwrap();
            let post = &fast.posteriors[t - 1];
            let sum: f64 = post.mass().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "posterior at step {t} sums to {sum}");
            let n = post.mass().len().max(sub.posterior.len());
            let tv: f64 = (0..n)
                .map(|k| (post.prob(k) - sub.posterior.get(k).copied().unwrap_or(0.0)).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 1e-9, "step {t} posterior differs, tv {tv}");
            max_tv = max_tv.max(tv);
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:.1?}, budget is 10 s");
    format!("{instances} instances, max |dloglik| {max_dll:.1e}, max TV {max_tv:.1e}")
}

fn reference_config(hours: f64, volume_vph: f64, penetration: f64, seed: u64) -> SimConfig {
    let cfg = RunConfig { hours, volume_vph, penetration, seed, ..RunConfig::default() };
    cfg.sim_config().unwrap()
}

/// Criterion 2: at the reference scenario (720 vph, 10% penetration, 8 h)
/// 200 replications recover both parameters tightly and the 95% intervals
/// cover at close-to-nominal rates.
fn c2_calibration() -> String {
    let sim_cfg = reference_config(8.0, 720.0, 0.10, 41);
    let settings =
        StudySettings { replications: 200, draws: 500, starts: 4, levels: vec![0.95], seed: 17 };
    let report = calibration_study(&sim_cfg, 96, &settings).unwrap();
    let rate = &report.params[0];
    let phi = &report.params[1];

    assert!(rate.error.mape <= 0.04, "rate MAPE {:.4} above 4%", rate.error.mape);
    assert!(phi.error.mape <= 0.07, "phi MAPE {:.4} above 7%", phi.error.mape);
    for p in [rate, phi] {
        let cov = p.levels[0].stats.coverage;
        assert!(
            (0.90..=0.98).contains(&cov),
            "{} 95% interval coverage {:.3} outside [0.90, 0.98]",
            p.name,
            cov
        );
    }
    format!(
        "MAPE rate {:.2}% phi {:.2}%, coverage rate {:.1}% phi {:.1}%",
        100.0 * rate.error.mape,
        100.0 * phi.error.mape,
        100.0 * rate.levels[0].stats.coverage,
        100.0 * phi.levels[0].stats.coverage,
    )
}

/// Criterion 3: eight times the data should roughly halve posterior width;
/// concretely, the 95% interval for the arrival rate at 16 h is less than
/// half its 2 h width in at least 95% of paired replications.
fn c3_shrinkage() -> String {
    let reps = 40;
    let settings =
        StudySettings { replications: reps, draws: 500, starts: 4, levels: vec![0.95], seed: 29 };
    let widths = |hours: f64| -> Vec<f64> {
        let report =
            calibration_study(&reference_config(hours, 720.0, 0.10, 83), 96, &settings).unwrap();
        report.params[0].intervals[0].iter().map(|iv| iv.width()).collect()
    };
    let short = widths(2.0);
    let long = widths(16.0);
    let halved = short.iter().zip(&long).filter(|(s, l)| **l < 0.5 * **s).count();
    let needed = (0.95 * reps as f64).ceil() as usize;
    assert!(halved >= needed, "interval halved in only {halved}/{reps} pairs, need {needed}");
    format!(
        "width halved in {halved}/{reps} pairs (mean 2 h width {:.4}, 16 h {:.4})",
        short.iter().sum::<f64>() / reps as f64,
        long.iter().sum::<f64>() / reps as f64,
    )
}

/// Criterion 4: estimation error falls as demand grows (more events per
/// hour) and queue-length error falls as penetration grows; with every
/// vehicle observed noise-free the per-cycle maximum queue is essentially
/// exact.
fn c4_monotonicity() -> String {
    let settings =
        StudySettings { replications: 40, draws: 500, starts: 4, levels: vec![0.95], seed: 59 };
    let volumes = [180.0, 360.0, 720.0];
    let mut rate_mapes = Vec::new();
    for &v in &volumes {
        let report =
            calibration_study(&reference_config(8.0, v, 0.10, 101), 96, &settings).unwrap();
        rate_mapes.push(report.params[0].error.mape);
    }
    for pair in rate_mapes.windows(2) {
        assert!(pair[1] < pair[0], "rate MAPE did not fall with volume: {rate_mapes:?}");
    }

    let phis = [0.05, 0.2, 0.5];
    let mut queue_mapes = Vec::new();
    for &phi in &phis {
        let sim_cfg = reference_config(25.0, 540.0, phi, 211);
        let report = max_queue_study(&sim_cfg, 96, 2).unwrap();
        assert!(report.cycles_scored >= 1000, "need at least 1000 cycles");
        queue_mapes.push(report.error.mape);
    }
    for pair in queue_mapes.windows(2) {
        assert!(pair[1] < pair[0], "max-queue MAPE did not fall with penetration: {queue_mapes:?}");
    }

    let mut full_cfg = RunConfig {
        hours: 25.0,
        volume_vph: 540.0,
        penetration: 1.0,
        seed: 223,
        ..RunConfig::default()
    };
    full_cfg.noise_sd_slots = 0.0;
    full_cfg.noise_half_width = 0;
    let exact = max_queue_study(&full_cfg.sim_config().unwrap(), 96, 1).unwrap();
    assert!(
        exact.error.mape < 0.01,
        "fully observed noise-free max-queue MAPE {:.4} is not below 1%",
        exact.error.mape
    );

    format!(
        "rate MAPE by volume {:?}, queue MAPE by penetration {:?}, fully observed {:.3}%",
        rate_mapes.iter().map(|m| format!("{:.3}", m)).collect::<Vec<_>>(),
        queue_mapes.iter().map(|m| format!("{:.3}", m)).collect::<Vec<_>>(),
        100.0 * exact.error.mape,
    )
}

/// Criterion 5: the three posterior machineries agree on a shared dataset,
/// and a deliberately mis-centered importance proposal is flagged rather
/// than fatal.
fn c5_method_agreement() -> String {
    let sim_cfg = reference_config(1.0, 720.0, 0.10, 307);
    let sim = simulate(&sim_cfg, 0, false).unwrap();
    let days = [sim.obs];
    let template = TrafficParams::new(ArrivalProfile::uniform(0.15).unwrap(), 0.2).unwrap();
    let ctx =
        LikelihoodContext::new(&sim_cfg.grid, &sim_cfg.obs_model, template, &days, 96).unwrap();

    let fit = map_fit(&ctx, &FitOptions { starts: 4, seed: 5, ..Default::default() }).unwrap();
    let lap = LaplaceApprox::from_mode(|z| -ctx.log_post_z(z), &fit.z).unwrap();

    // Shared evaluation grid: mode +/- 6 posterior standard deviations.
    let bound = |i: usize, shift: f64| {
        let mut z = lap.mode_z.clone();
        z[i] += shift * lap.sd()[i];
        ctx.params_from_z(&z).flatten()[i]
    };
    let cells = 40usize;
    let linspace = |lo: f64, hi: f64| -> Vec<f64> {
        (0..cells).map(|i| lo + (hi - lo) * i as f64 / (cells - 1) as f64).collect()
    };
    let rates = linspace(bound(0, -6.0).max(1e-4), bound(0, 6.0).min(RATE_MAX - 1e-4));
    let phis = linspace(bound(1, -6.0).max(PHI_MIN), bound(1, 6.0).min(0.999));
    let cell = [rates[1] - rates[0], phis[1] - phis[0]];
    let grid_mean = {
        let post = grid_posterior(&ctx, &rates, &phis).unwrap();
        let (r, p) = post.mean();
        [r, p]
    };

    let n_is = 4000;
    let is = importance_sample(&ctx, &lap, n_is, 5, 0).unwrap();
    assert!(is.ess > 0.0 && is.ess <= n_is as f64, "ESS {} out of range", is.ess);
    assert!(!is.low_ess, "healthy proposal should not warn");

    let mcmc = run_mcmc(
        &ctx,
        &fit.z,
        Some(lap.cov_factor()),
        &McmcOptions { chains: 4, warmup: 300, iters: 800, seed: 5, ..Default::default() },
    )
    .unwrap();

    let mean_of = |draws: &[pts_queue::inference::Draw], i: usize| {
        let vals: Vec<f64> = draws.iter().map(|d| d.params.flatten()[i]).collect();
        let ws: Vec<f64> = draws.iter().map(|d| d.weight).collect();
        (weighted_mean(&vals, &ws), weighted_sd(&vals, &ws))
    };
    let mut detail = String::new();
    for i in 0..2 {
        let (m_is, sd_is) = mean_of(&is.draws, i);
        let (m_mc, _) = mean_of(&mcmc.draws, i);
        let n_mc = mcmc.draws.len() as f64;
        // Two grid cells for the deterministic reference, two Monte-Carlo
        // standard errors between the two samplers (a tenth effective-draw
        // ratio is a deliberately rough bound on the chain autocorrelation).
        let tol_grid = 2.0 * cell[i];
        let tol_mc = 2.0 * (sd_is / is.ess.sqrt() + sd_is / (n_mc / 10.0).sqrt());
        assert!(
            (m_is - grid_mean[i]).abs() <= tol_grid,
            "param {i}: importance mean {m_is:.5} vs grid {:.5} exceeds {tol_grid:.5}",
            grid_mean[i]
        );
        assert!(
            (m_mc - grid_mean[i]).abs() <= tol_grid,
            "param {i}: MCMC mean {m_mc:.5} vs grid {:.5} exceeds {tol_grid:.5}",
            grid_mean[i]
        );
        assert!(
            (m_is - m_mc).abs() <= tol_grid.max(tol_mc),
            "param {i}: importance mean {m_is:.5} vs MCMC {m_mc:.5} exceeds {:.5}",
            tol_grid.max(tol_mc)
        );
        detail.push_str(&format!(
            "{}grid {:.4} / IS {:.4} / MCMC {:.4}",
            if i == 0 { "rate: " } else { "; phi: " },
            grid_mean[i],
            m_is,
            m_mc
        ));
    }

    // A proposal centered well away from the mode (toward the low-rate tail,
    // where the posterior is tiny but never exactly zero) and far too narrow:
    // the sampler must finish, normalize, and raise the ESS warning.
    let off_mode: Vec<f64> = fit.z.iter().map(|z| z - 1.5).collect();
    let bad_nll = |z: &[f64]| -> f64 {
        z.iter().zip(&off_mode).map(|(a, b)| 200.0 * (a - b) * (a - b)).sum()
    };
    let bad = LaplaceApprox::from_mode(bad_nll, &off_mode).unwrap();
    let degraded = importance_sample(&ctx, &bad, 1000, 5, 0).unwrap();
    assert!(degraded.low_ess, "mis-centered proposal must trip the ESS warning");
    let wsum: f64 = degraded.draws.iter().map(|d| d.weight).sum();
    assert!((wsum - 1.0).abs() < 1e-9, "weights must still normalize, got {wsum}");
    detail.push_str(&format!(
        "; healthy ESS {:.0}/{n_is}, degraded ESS {:.1}/1000",
        is.ess, degraded.ess
    ));
    detail
}

/// Criterion 6: a six-segment within-cycle demand profile simulated for
/// 25 h is recovered by the MCMC path — every segment mean within 15% of
/// truth and truth inside the 95% interval for at least five of six.
fn c6_piecewise_recovery() -> String {
    let breakpoints = vec![0, 15, 30, 45, 60, 75];
    let true_rates = [0.10, 0.25, 0.35, 0.20, 0.12, 0.05];
    let profile = ArrivalProfile::piecewise(breakpoints.clone(), true_rates.to_vec(), 90).unwrap();
    let base = RunConfig { hours: 25.0, ..RunConfig::default() };
    let sim_cfg = SimConfig {
        grid: base.grid().unwrap(),
        profile: profile.clone(),
        phi: 0.15,
        obs_model: base.obs_model().unwrap(),
        geometry: base.geometry(),
        warmup_cycles: 50,
        seed: 401,
    };
    let sim = simulate(&sim_cfg, 0, false).unwrap();
    let days = [sim.obs];

    let neutral = ArrivalProfile::piecewise(breakpoints, vec![0.15; 6], 90).unwrap();
    let template = TrafficParams::new(neutral, 0.2).unwrap();
    let ctx =
        LikelihoodContext::new(&sim_cfg.grid, &sim_cfg.obs_model, template, &days, 96).unwrap();
    let fit = map_fit(&ctx, &FitOptions { starts: 3, seed: 7, ..Default::default() }).unwrap();
    let proposal = LaplaceApprox::from_mode(|z| -ctx.log_post_z(z), &fit.z)
        .ok()
        .map(|lap| lap.cov_factor().clone());
    let mcmc = run_mcmc(
        &ctx,
        &fit.z,
        proposal.as_ref(),
        &McmcOptions { chains: 4, warmup: 400, iters: 700, seed: 7, ..Default::default() },
    )
    .unwrap();

    let ws: Vec<f64> = mcmc.draws.iter().map(|d| d.weight).collect();
    let mut covered = 0;
    let mut worst_rel = 0.0f64;
    for (i, &truth) in true_rates.iter().enumerate() {
        let vals: Vec<f64> = mcmc.draws.iter().map(|d| d.params.flatten()[i]).collect();
        let mean = weighted_mean(&vals, &ws);
        let rel = (mean - truth).abs() / truth;
        assert!(
            rel <= 0.15,
            "segment {i}: posterior mean {mean:.4} vs truth {truth} is {:.1}% off",
            100.0 * rel
        );
        worst_rel = worst_rel.max(rel);
        let hdi = weighted_hdi(&vals, &ws, 0.95).unwrap();
        if hdi.contains(truth) {
            covered += 1;
        }
    }
    assert!(covered >= 5, "truth inside the 95% interval for only {covered}/6 segments");
    format!(
        "worst segment error {:.1}%, truth covered in {covered}/6 segments, mean accept {:.2}",
        100.0 * worst_rel,
        mcmc.accept_rates.iter().sum::<f64>() / mcmc.accept_rates.len() as f64,
    )
}

/// Criterion 7: structural invariants — kernel symmetry and normalization,
/// per-step posterior normalization, no departures during red, exact
/// round-trip at full noise-free observation, and bit-identical reruns.
fn c7_invariants() -> String {
    // Measurement kernel: symmetric, normalized, correctly supported.
    for (sd, h) in [(0.5, 1usize), (1.0, 2), (2.0, 3), (0.0, 0)] {
        let k = GaussKernel::new(sd, h).unwrap();
        let total: f64 = (-(h as i64)..=h as i64).map(|c| k.weight(c)).sum();
        assert!((total - 1.0).abs() < 1e-12, "kernel ({sd},{h}) sums to {total}");
        for c in 0..=h as i64 {
            assert_eq!(k.weight(c), k.weight(-c), "kernel ({sd},{h}) asymmetric at {c}");
        }
        assert_eq!(k.weight(h as i64 + 1), 0.0);
    }

    // One full filtering pass: every posterior normalized, expected
    // departures exactly zero on red steps.
    let sim_cfg = reference_config(2.0, 720.0, 0.2, 631);
    let sim = simulate(&sim_cfg, 0, false).unwrap();
    let params = TrafficParams::new(sim_cfg.profile.clone(), sim_cfg.phi).unwrap();
    let init = stationary_cycle_start(&sim_cfg.profile, &sim_cfg.grid, 96).unwrap();
    let res = run_filter(
        &sim.obs,
        &params,
        &sim_cfg.grid,
        &sim_cfg.obs_model,
        &init.pmf,
        FilterOptions::full(),
    )
    .unwrap();
    assert!(matches!(res.log_lik, LogLik::Finite(_)));
    for (t, post) in res.posteriors.iter().enumerate() {
        let sum: f64 = post.mass().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "posterior at step {} sums to {sum}", t + 1);
    }
    for (t, step) in res.steps.iter().enumerate() {
        if !sim_cfg.grid.is_green(t + 1) {
            assert_eq!(step.departure_post, 0.0, "red step {} shows departures", t + 1);
        }
    }
    // The simulation respects the same rule.
    for t in 1..=sim_cfg.grid.horizon() {
        if !sim_cfg.grid.is_green(t) {
            let prev = if t == 1 { sim.truth.initial_queue } else { sim.truth.queues[t - 2] };
            let depart = prev + sim.truth.arrivals[t - 1] as u32 - sim.truth.queues[t - 1];
            assert_eq!(depart, 0, "simulated departure during red at step {t}");
        }
    }

    // Full penetration, noise-free: the trajectory encoder reproduces the
    // simulator's observation sequence exactly.
    let mut full = RunConfig { hours: 2.0, penetration: 1.0, seed: 227, ..RunConfig::default() };
    full.noise_sd_slots = 0.0;
    full.noise_half_width = 0;
    let full_cfg = full.sim_config().unwrap();
    let out = simulate(&full_cfg, 3, true).unwrap();
    let enc = encode(&out.observed_trajectories, &full.geometry(), &full_cfg.grid).unwrap();
    assert_eq!(enc.seq, out.obs, "noise-free encode round trip is not exact");
    assert!(enc.diagnostics.skipped_no_prestop.is_empty());
    assert!(enc.diagnostics.skipped_out_of_window.is_empty());

    // Bit-identical determinism across reruns of simulation and fit.
    let again = simulate(&sim_cfg, 0, false).unwrap();
    assert_eq!(again.obs, sim.obs, "simulation is not deterministic");
    let days = [sim.obs.clone()];
    let template = TrafficParams::new(ArrivalProfile::uniform(0.15).unwrap(), 0.2).unwrap();
    let ctx =
        LikelihoodContext::new(&sim_cfg.grid, &sim_cfg.obs_model, template, &days, 96).unwrap();
    let opts = FitOptions { starts: 3, seed: 11, ..Default::default() };
    let fit_a = map_fit(&ctx, &opts).unwrap();
    let fit_b = map_fit(&ctx, &opts).unwrap();
    assert_eq!(fit_a.z, fit_b.z, "optimizer is not deterministic");
    let lap = LaplaceApprox::from_mode(|z| -ctx.log_post_z(z), &fit_a.z).unwrap();
    let is_a = importance_sample(&ctx, &lap, 500, 11, 0).unwrap();
    let is_b = importance_sample(&ctx, &lap, 500, 11, 0).unwrap();
    assert!(
        is_a.draws.iter().zip(&is_b.draws).all(|(a, b)| a.z == b.z && a.weight == b.weight),
        "posterior sampling is not deterministic"
    );

    "kernel, normalization, red-phase, round-trip and determinism checks all hold".into()
}
