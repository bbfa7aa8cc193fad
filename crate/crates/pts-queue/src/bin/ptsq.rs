//! Command-line front end for the queue model: simulate scenarios, encode
//! trajectory files into observation sequences, fit parameters, filter the
//! hidden queue, and run calibration sweeps.
//!
//! Every subcommand reads one flat `key = value` config file and writes its
//! outputs into a directory, always including a `manifest.txt` that records
//! the config hash and the headline numbers of the run.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pts_queue::config::{FitMethod, RunConfig};
use pts_queue::encode::encode;
use pts_queue::error::{Error, Result};
use pts_queue::filter::{run_filter, FilterOptions, LogLik};
use pts_queue::harness::{calibration_study, StudySettings};
use pts_queue::inference::{
    grid_posterior, importance_sample, map_fit, run_mcmc, state_mixture, weighted_mean,
    weighted_sd, Draw, FitOptions, LaplaceApprox, LikelihoodContext, McmcOptions,
};
use pts_queue::io;
use pts_queue::observe::ObservationSeq;
use pts_queue::queue::stationary_cycle_start;
use pts_queue::sim::simulate;

#[derive(Parser)]
#[command(name = "ptsq")]
#[command(about = "Signalized-intersection queue estimation from sparse probe trajectories")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario and write ground truth plus probe observations.
    Simulate {
        /// Scenario config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replication index (selects the random stream, not the seed).
        #[arg(long, default_value_t = 0)]
        replication: u64,
        /// Also write sampled probe trajectories.
        #[arg(long)]
        trajectories: bool,
        /// Output directory (created if absent).
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode raw trajectory samples into an observation sequence.
    Encode {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory CSV (vehicle_id,time_s,dist_m).
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit arrival rates and penetration to observation sequences.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// One file per observation day; all must share the config horizon.
        #[arg(long, required = true, num_args = 1..)]
        observations: Vec<PathBuf>,
        /// Override the config's seed for optimizer starts and draws.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior of the hidden queue along one observation sequence.
    Filter {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        observations: PathBuf,
        /// Parameter draws from `fit`; mixes the state posterior over them.
        /// Without this the config's own parameters are taken as known.
        #[arg(long)]
        draws: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicated simulate→fit studies across the config's window lengths.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate { config, seed, replication, trajectories, out } => {
            cmd_simulate(&config, seed, replication, trajectories, &out)
        }
        Cmd::Encode { config, trajectories, out } => cmd_encode(&config, &trajectories, &out),
        Cmd::Fit { config, observations, seed, out } => cmd_fit(&config, &observations, seed, &out),
        Cmd::Filter { config, observations, draws, out } => {
            cmd_filter(&config, &observations, draws.as_deref(), &out)
        }
        Cmd::Evaluate { config, seed, out } => cmd_evaluate(&config, seed, &out),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_config(path: &Path, seed_override: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cmd_simulate(
    config: &Path,
    seed: Option<u64>,
    replication: u64,
    with_trajectories: bool,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let sim_cfg = cfg.sim_config()?;
    let result = simulate(&sim_cfg, replication, with_trajectories)?;
    ensure_dir(out)?;

    io::write_truth(&out.join("truth.csv"), &result.truth, &sim_cfg.grid)?;
    io::write_observations(&out.join("observations.csv"), &result.obs)?;
    if with_trajectories {
        io::write_trajectories(&out.join("trajectories.csv"), &result.observed_trajectories)?;
    }

    let max_queue = result.truth.queues.iter().copied().max().unwrap_or(0);
    let mut entries = vec![
        ("command", "simulate".to_string()),
        ("config_hash", cfg.hash()),
        ("seed", cfg.seed.to_string()),
        ("replication", replication.to_string()),
        ("horizon_steps", sim_cfg.grid.horizon().to_string()),
        ("delta_t_s", format!("{:.6}", sim_cfg.grid.delta_t())),
        ("vehicles_total", result.vehicles.len().to_string()),
        ("vehicles_observed", result.obs.observed_count().to_string()),
        ("initial_queue", result.truth.initial_queue.to_string()),
        ("max_queue", max_queue.to_string()),
    ];
    if with_trajectories {
        entries.push(("trajectories", result.observed_trajectories.len().to_string()));
    }
    io::write_manifest(&out.join("manifest.txt"), &entries)?;

    println!(
        "simulated {} steps: {} vehicles, {} observed, max queue {}",
        sim_cfg.grid.horizon(),
        result.vehicles.len(),
        result.obs.observed_count(),
        max_queue
    );
    Ok(())
}

fn cmd_encode(config: &Path, trajectories: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config, None)?;
    let grid = cfg.grid()?;
    let geom = cfg.geometry();
    let trajs = io::read_trajectories(trajectories)?;
    let encoded = encode(&trajs, &geom, &grid)?;
    ensure_dir(out)?;

    io::write_observations(&out.join("observations.csv"), &encoded.seq)?;
    let diag = &encoded.diagnostics;
    io::write_manifest(
        &out.join("manifest.txt"),
        &[
            ("command", "encode".to_string()),
            ("config_hash", cfg.hash()),
            ("trajectories_read", trajs.len().to_string()),
            ("events", encoded.seq.observed_count().to_string()),
            ("skipped_no_prestop", diag.skipped_no_prestop.len().to_string()),
            ("skipped_out_of_window", diag.skipped_out_of_window.len().to_string()),
            ("vehicles_with_extra_stops", diag.extra_stops.len().to_string()),
        ],
    )?;

    println!(
        "encoded {} trajectories into {} events ({} skipped)",
        trajs.len(),
        encoded.seq.observed_count(),
        diag.skipped_no_prestop.len() + diag.skipped_out_of_window.len()
    );
    Ok(())
}

fn read_days(paths: &[PathBuf]) -> Result<Vec<ObservationSeq>> {
    paths.iter().map(|p| io::read_observations(p)).collect()
}

/// Natural-space value of flat parameter `i` after shifting the mode by
/// `shift` standard deviations along that unconstrained coordinate.
fn shifted_param(ctx: &LikelihoodContext, lap: &LaplaceApprox, i: usize, shift: f64) -> f64 {
    let mut z = lap.mode_z.clone();
    z[i] += shift * lap.sd()[i];
    ctx.params_from_z(&z).flatten()[i]
}

fn cmd_fit(config: &Path, observations: &[PathBuf], seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let grid = cfg.grid()?;
    let model = cfg.obs_model()?;
    let template = cfg.params()?;
    let days = read_days(observations)?;
    let ctx = LikelihoodContext::new(&grid, &model, template, &days, cfg.k_max)?;

    let fit = map_fit(
        &ctx,
        &FitOptions { starts: cfg.fit_starts, seed: cfg.seed, ..FitOptions::default() },
    )?;

    ensure_dir(out)?;
    let names = fit.params.names();
    let events: usize = days.iter().map(|d| d.observed_count()).sum();
    let mut entries = vec![
        ("command", "fit".to_string()),
        ("config_hash", cfg.hash()),
        ("method", cfg.fit_method.as_str().to_string()),
        ("days", days.len().to_string()),
        ("events", events.to_string()),
        ("log_lik", format!("{:.6}", fit.log_lik)),
        ("converged", fit.converged.to_string()),
        ("evals", fit.evals.to_string()),
    ];
    for (name, value) in names.iter().zip(fit.params.flatten()) {
        entries.push(("mle", format!("{name} = {value:.6}")));
    }

    let draws: Vec<Draw> = match cfg.fit_method {
        FitMethod::Laplace => {
            let lap = LaplaceApprox::from_mode(|z| -ctx.log_post_z(z), &fit.z)?;
            let is = importance_sample(&ctx, &lap, cfg.fit_draws, cfg.seed, 0)?;
            entries.push(("ess", format!("{:.1}", is.ess)));
            entries.push(("low_ess", is.low_ess.to_string()));
            entries.push(("proposal_jitter", format!("{:.3e}", lap.jitter)));
            is.draws
        }
        FitMethod::Mcmc => {
            // A curvature-matched proposal is a big head start for the
            // walkers, but the sampler stands on its own if the Hessian is
            // unusable at the mode.
            let factor = LaplaceApprox::from_mode(|z| -ctx.log_post_z(z), &fit.z)
                .ok()
                .map(|lap| lap.cov_factor().clone());
            let mcout = run_mcmc(
                &ctx,
                &fit.z,
                factor.as_ref(),
                &McmcOptions {
                    chains: cfg.mcmc_chains,
                    warmup: cfg.mcmc_warmup,
                    iters: cfg.mcmc_iters,
                    seed: cfg.seed,
                    ..McmcOptions::default()
                },
            )?;
            let accept = mcout.accept_rates.iter().sum::<f64>() / mcout.accept_rates.len() as f64;
            entries.push(("chains", cfg.mcmc_chains.to_string()));
            entries.push(("mean_accept", format!("{accept:.3}")));
            for (name, r) in names.iter().zip(&mcout.split_rhat) {
                entries.push(("split_rhat", format!("{name} = {r:.4}")));
            }
            entries.push(("rhat_warn", mcout.rhat_warn.to_string()));
            mcout.draws
        }
        FitMethod::Grid => {
            let grid_draws = fit_on_grid(&cfg, &ctx, &fit.z, out, &mut entries)?;
            grid_draws
        }
    };

    io::write_draws(&out.join("draws.csv"), &draws)?;
    for (i, name) in names.iter().enumerate() {
        let vals: Vec<f64> = draws.iter().map(|d| d.params.flatten()[i]).collect();
        let ws: Vec<f64> = draws.iter().map(|d| d.weight).collect();
        let mean = weighted_mean(&vals, &ws);
        let sd = weighted_sd(&vals, &ws);
        entries.push(("posterior", format!("{name} = {mean:.6} (sd {sd:.6})")));
    }
    let (stat_miss, filt_miss) = ctx.miss_counts();
    entries.push(("infeasible_evals", (stat_miss + filt_miss).to_string()));
    io::write_manifest(&out.join("manifest.txt"), &entries)?;

    for line in entries.iter().filter(|(k, _)| *k == "posterior") {
        println!("{}", line.1);
    }
    Ok(())
}

/// Exhaustive posterior over a rate × penetration grid, written alongside
/// the draw sample. The grid is centered on the mode with a span set by the
/// curvature there, falling back to the whole box when that is degenerate.
fn fit_on_grid(
    cfg: &RunConfig,
    ctx: &LikelihoodContext,
    mode_z: &[f64],
    out: &Path,
    entries: &mut Vec<(&str, String)>,
) -> Result<Vec<Draw>> {
    use pts_queue::inference::{PHI_MIN, RATE_MAX};

    let (rate_lo, rate_hi, phi_lo, phi_hi) =
        match LaplaceApprox::from_mode(|z| -ctx.log_post_z(z), mode_z) {
            Ok(lap) => (
                shifted_param(ctx, &lap, 0, -6.0).max(1e-4),
                shifted_param(ctx, &lap, 0, 6.0).min(RATE_MAX - 1e-4),
                shifted_param(ctx, &lap, 1, -6.0).max(PHI_MIN),
                shifted_param(ctx, &lap, 1, 6.0).min(0.999),
            ),
            Err(_) => (1e-3, RATE_MAX - 1e-4, PHI_MIN, 0.999),
        };

    let linspace = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let rates = linspace(rate_lo, rate_hi, cfg.grid_rate_cells.max(2));
    let phis = linspace(phi_lo, phi_hi, cfg.grid_phi_cells.max(2));
    let post = grid_posterior(ctx, &rates, &phis)?;

    let mut lines = String::from("rate,phi,log_lik,posterior\n");
    for (i, &r) in post.rates.iter().enumerate() {
        for (j, &p) in post.phis.iter().enumerate() {
            let idx = i * post.phis.len() + j;
            lines.push_str(&format!(
                "{r},{p},{:.6},{:.6e}\n",
                post.log_lik[idx], post.posterior[idx]
            ));
        }
    }
    io::write_text(&out.join("grid.csv"), &lines)?;

    let (mean_rate, mean_phi) = post.mean();
    let (mi, mj) = post.map_cell();
    entries.push(("grid_cells", format!("{} x {}", rates.len(), phis.len())));
    entries.push(("grid_mean", format!("rate = {mean_rate:.6}, phi = {mean_phi:.6}")));
    entries.push(("grid_map", format!("rate = {:.6}, phi = {:.6}", post.rates[mi], post.phis[mj])));

    // Re-expressed as weighted draws so downstream state mixing treats all
    // three fit methods the same way.
    let template = ctx.template();
    let mut draws = Vec::with_capacity(rates.len() * phis.len());
    for (i, &r) in post.rates.iter().enumerate() {
        for (j, &p) in post.phis.iter().enumerate() {
            let idx = i * post.phis.len() + j;
            if post.posterior[idx] <= 0.0 {
                continue;
            }
            let params = template.unflatten(&[r, p])?;
            let z = ctx.z_from_params(&params);
            draws.push(Draw {
                params,
                z,
                log_post: post.log_lik[idx],
                weight: post.posterior[idx],
            });
        }
    }
    Ok(draws)
}

fn cmd_filter(
    config: &Path,
    observations: &Path,
    draws_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(config, None)?;
    let grid = cfg.grid()?;
    let model = cfg.obs_model()?;
    let params = cfg.params()?;
    let obs = io::read_observations(observations)?;
    ensure_dir(out)?;

    let mut entries = vec![
        ("command", "filter".to_string()),
        ("config_hash", cfg.hash()),
        ("events", obs.observed_count().to_string()),
    ];

    match draws_path {
        Some(path) => {
            let draws = io::read_draws(path, &params)?;
            let days = [obs.clone()];
            let ctx = LikelihoodContext::new(&grid, &model, params.clone(), &days, cfg.k_max)?;
            let profile = state_mixture(&obs, &grid, &model, &ctx, &draws)?;
            io::write_state_profile(&out.join("state_profile.csv"), &profile)?;
            entries.push(("draws", draws.len().to_string()));
            entries.push(("skipped_draws", profile.skipped_draws.to_string()));
        }
        None => {
            let start = stationary_cycle_start(&params.profile, &grid, cfg.k_max)?;
            let result =
                run_filter(&obs, &params, &grid, &model, &start.pmf, FilterOptions::full())?;
            match result.log_lik {
                LogLik::Finite(ll) => entries.push(("log_lik", format!("{ll:.6}"))),
                LogLik::Impossible { step } => {
                    return Err(Error::Degenerate(format!(
                        "observation at step {step} is impossible under the configured parameters"
                    )));
                }
            }
            io::write_filter_profile(&out.join("filter_profile.csv"), &result.steps)?;
        }
    }

    io::write_manifest(&out.join("manifest.txt"), &entries)?;
    println!("filtered {} steps", grid.horizon());
    Ok(())
}

fn cmd_evaluate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(config, seed)?;
    ensure_dir(out)?;

    let settings = StudySettings {
        replications: cfg.eval_replications,
        draws: cfg.fit_draws,
        starts: cfg.fit_starts,
        levels: cfg.eval_levels.clone(),
        seed: cfg.seed,
    };

    let mut rows = String::from("hours,param,truth,mape,level,mean_width,coverage\n");
    let mut entries = vec![
        ("command", "evaluate".to_string()),
        ("config_hash", cfg.hash()),
        ("replications", cfg.eval_replications.to_string()),
    ];

    for &hours in &cfg.eval_hours {
        let mut scenario = cfg.clone();
        scenario.hours = hours;
        let sim_cfg = scenario.sim_config()?;
        let report = calibration_study(&sim_cfg, scenario.k_max, &settings)?;

        for param in &report.params {
            for score in &param.levels {
                rows.push_str(&format!(
                    "{hours},{},{:.6},{:.6},{},{:.6},{:.6}\n",
                    param.name,
                    param.truth,
                    param.error.mape,
                    score.level,
                    score.stats.awci,
                    score.stats.coverage,
                ));
            }
        }
        entries.push((
            "window",
            format!(
                "{hours} h: low_ess {}, unconverged {}",
                report.low_ess_reps, report.unconverged_fits
            ),
        ));
        println!("{hours} h window done ({} replications)", cfg.eval_replications);
    }

    io::write_text(&out.join("eval.csv"), &rows)?;
    io::write_manifest(&out.join("manifest.txt"), &entries)?;
    Ok(())
}
