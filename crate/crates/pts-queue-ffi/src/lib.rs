//! C ABI over the queue estimation library.
//!
//! Conventions:
//!
//! * Handles (`PtsqConfig`, `PtsqObservations`, `PtsqFit`) are opaque; create
//!   them through the constructors here and release them with the matching
//!   `*_free` call. Passing a handle to any other `free` is undefined.
//! * Fallible calls return a status code: 0 success, 1 misuse of the API
//!   (null pointer, bad index or length), 2 invalid config or input data,
//!   3 degenerate result, 4 numerical failure. After a nonzero status,
//!   [`ptsq_last_error`] retrieves a message describing the failure on the
//!   calling thread.
//! * Scalar getters on a valid handle cannot fail; on a null handle they
//!   return 0 or NaN.
//!
//! The generated header lands in `include/ptsq.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pts_queue::config::{FitMethod, RunConfig};
use pts_queue::error::Error;
use pts_queue::filter::{run_filter, FilterOptions, LogLik};
use pts_queue::inference::{
    grid_posterior, importance_sample, map_fit, run_mcmc, state_mixture, weighted_mean,
    weighted_sd, Draw, FitOptions, LaplaceApprox, LikelihoodContext, McmcOptions, PHI_MIN,
    RATE_MAX,
};
use pts_queue::observe::ObservationSeq;
use pts_queue::queue::stationary_cycle_start;
use pts_queue::sim::simulate;

pub const PTSQ_OK: i32 = 0;
pub const PTSQ_MISUSE: i32 = 1;
pub const PTSQ_INVALID: i32 = 2;
pub const PTSQ_DEGENERATE: i32 = 3;
pub const PTSQ_NUMERICAL: i32 = 4;

/// Opaque scenario configuration.
pub struct PtsqConfig(RunConfig);

/// Opaque per-step observation sequence.
pub struct PtsqObservations(ObservationSeq);

/// Opaque posterior parameter sample from a fit.
pub struct PtsqFit {
    names: Vec<String>,
    draws: Vec<Draw>,
    means: Vec<f64>,
    sds: Vec<f64>,
    log_lik: f64,
    converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap_or_default());
}

fn fail(err: &Error) -> i32 {
    set_error(&err.to_string());
    err.exit_code()
}

fn misuse(msg: &str) -> i32 {
    set_error(msg);
    PTSQ_MISUSE
}

/// Copy `text` into `buf` (truncated, always NUL-terminated when `cap > 0`)
/// and report the length the full text needs, excluding the terminator.
fn copy_str(text: &CStr, buf: *mut c_char, cap: usize) -> usize {
    let bytes = text.to_bytes();
    if !buf.is_null() && cap > 0 {
        let n = bytes.len().min(cap - 1);
        unsafe {
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
    }
    bytes.len()
}

/// Run `body`, converting errors and panics into status codes.
fn guarded(body: impl FnOnce() -> Result<(), Error>) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PTSQ_OK,
        Ok(Err(err)) => fail(&err),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal panic".into());
            set_error(&msg);
            PTSQ_NUMERICAL
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, i32> {
    if ptr.is_null() {
        return Err(misuse(&format!("{what} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| misuse(&format!("{what} is not valid UTF-8")))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ptsq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Retrieve the current thread's last error message. Returns the message
/// length (excluding the NUL terminator); the copy into `buf` is truncated
/// to `cap` bytes including the terminator.
#[no_mangle]
pub extern "C" fn ptsq_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| copy_str(&e.borrow(), buf, cap))
}

/// New configuration with every key at its default.
#[no_mangle]
pub extern "C" fn ptsq_config_default() -> *mut PtsqConfig {
    Box::into_raw(Box::new(PtsqConfig(RunConfig::default())))
}

/// Load a `key = value` config file.
#[no_mangle]
pub unsafe extern "C" fn ptsq_config_load(path: *const c_char, out: *mut *mut PtsqConfig) -> i32 {
    if out.is_null() {
        return misuse("out is null");
    }
    let path = match cstr_arg(path, "path") {
        Ok(p) => PathBuf::from(p),
        Err(code) => return code,
    };
    guarded(|| {
        let cfg = RunConfig::from_file(&path)?;
        *out = Box::into_raw(Box::new(PtsqConfig(cfg)));
        Ok(())
    })
}

/// Parse config text in the same format as [`ptsq_config_load`].
#[no_mangle]
pub unsafe extern "C" fn ptsq_config_parse(text: *const c_char, out: *mut *mut PtsqConfig) -> i32 {
    if out.is_null() {
        return misuse("out is null");
    }
    let text = match cstr_arg(text, "text") {
        Ok(t) => t.to_string(),
        Err(code) => return code,
    };
    guarded(|| {
        let cfg = RunConfig::from_str_contents(&text)?;
        *out = Box::into_raw(Box::new(PtsqConfig(cfg)));
        Ok(())
    })
}

/// Set one dotted config key (e.g. `"window.hours"`, `"2.5"`).
#[no_mangle]
pub unsafe extern "C" fn ptsq_config_set(
    cfg: *mut PtsqConfig,
    key: *const c_char,
    value: *const c_char,
) -> i32 {
    let Some(cfg) = cfg.as_mut() else {
        return misuse("config is null");
    };
    let (key, value) = match (cstr_arg(key, "key"), cstr_arg(value, "value")) {
        (Ok(k), Ok(v)) => (k, v),
        (Err(code), _) | (_, Err(code)) => return code,
    };
    guarded(|| cfg.0.set(key, value))
}

/// Hex digest identifying the full effective configuration; needs a buffer
/// of at least 65 bytes.
#[no_mangle]
pub unsafe extern "C" fn ptsq_config_hash(
    cfg: *const PtsqConfig,
    buf: *mut c_char,
    cap: usize,
) -> i32 {
    let Some(cfg) = cfg.as_ref() else {
        return misuse("config is null");
    };
    if buf.is_null() || cap < 65 {
        return misuse("hash buffer must hold at least 65 bytes");
    }
    let hash = CString::new(cfg.0.hash()).expect("hex digest");
    copy_str(&hash, buf, cap);
    PTSQ_OK
}

/// Number of model steps in the configured analysis window.
#[no_mangle]
pub unsafe extern "C" fn ptsq_config_horizon(cfg: *const PtsqConfig, out: *mut usize) -> i32 {
    let Some(cfg) = cfg.as_ref() else {
        return misuse("config is null");
    };
    if out.is_null() {
        return misuse("out is null");
    }
    guarded(|| {
        *out = cfg.0.grid()?.horizon();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ptsq_config_free(cfg: *mut PtsqConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Simulate the configured scenario and return its probe observations.
/// `replication` selects an independent random stream under the same seed.
#[no_mangle]
pub unsafe extern "C" fn ptsq_simulate(
    cfg: *const PtsqConfig,
    replication: u64,
    out: *mut *mut PtsqObservations,
) -> i32 {
    let Some(cfg) = cfg.as_ref() else {
        return misuse("config is null");
    };
    if out.is_null() {
        return misuse("out is null");
    }
    guarded(|| {
        let sim_cfg = cfg.0.sim_config()?;
        let result = simulate(&sim_cfg, replication, false)?;
        *out = Box::into_raw(Box::new(PtsqObservations(result.obs)));
        Ok(())
    })
}

/// Read an observation CSV (`t,arrival,slot`).
#[no_mangle]
pub unsafe extern "C" fn ptsq_observations_read(
    path: *const c_char,
    out: *mut *mut PtsqObservations,
) -> i32 {
    if out.is_null() {
        return misuse("out is null");
    }
    let path = match cstr_arg(path, "path") {
        Ok(p) => PathBuf::from(p),
        Err(code) => return code,
    };
    guarded(|| {
        let obs = pts_queue::io::read_observations(&path)?;
        *out = Box::into_raw(Box::new(PtsqObservations(obs)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ptsq_observations_write(
    obs: *const PtsqObservations,
    path: *const c_char,
) -> i32 {
    let Some(obs) = obs.as_ref() else {
        return misuse("observations is null");
    };
    let path = match cstr_arg(path, "path") {
        Ok(p) => PathBuf::from(p),
        Err(code) => return code,
    };
    guarded(|| pts_queue::io::write_observations(&path, &obs.0))
}

/// Steps in the sequence; 0 on a null handle.
#[no_mangle]
pub unsafe extern "C" fn ptsq_observations_horizon(obs: *const PtsqObservations) -> usize {
    obs.as_ref().map_or(0, |o| o.0.horizon())
}

/// Count of steps with a reported stop position; 0 on a null handle.
#[no_mangle]
pub unsafe extern "C" fn ptsq_observations_count(obs: *const PtsqObservations) -> usize {
    obs.as_ref().map_or(0, |o| o.0.observed_count())
}

/// Look up step `t` (1-based). `*out_arrival` reports whether a probe
/// arrival was seen; `*out_slot` its stop position (0 when it passed
/// unimpeded or when there was no arrival).
#[no_mangle]
pub unsafe extern "C" fn ptsq_observations_at(
    obs: *const PtsqObservations,
    t: usize,
    out_arrival: *mut bool,
    out_slot: *mut u32,
) -> i32 {
    let Some(obs) = obs.as_ref() else {
        return misuse("observations is null");
    };
    if out_arrival.is_null() || out_slot.is_null() {
        return misuse("out is null");
    }
    if t < 1 || t > obs.0.horizon() {
        return misuse("step out of range");
    }
    *out_arrival = obs.0.arrival(t);
    *out_slot = obs.0.slot(t).unwrap_or(0);
    PTSQ_OK
}

#[no_mangle]
pub unsafe extern "C" fn ptsq_observations_free(obs: *mut PtsqObservations) {
    if !obs.is_null() {
        drop(Box::from_raw(obs));
    }
}

fn draws_for_method(
    cfg: &RunConfig,
    ctx: &LikelihoodContext,
    fit: &pts_queue::inference::MapFit,
) -> Result<Vec<Draw>, Error> {
    match cfg.fit_method {
        FitMethod::Laplace => {
            let lap = LaplaceApprox::from_mode(|z| -ctx.log_post_z(z), &fit.z)?;
            Ok(importance_sample(ctx, &lap, cfg.fit_draws, cfg.seed, 0)?.draws)
        }
        FitMethod::Mcmc => {
            let factor = LaplaceApprox::from_mode(|z| -ctx.log_post_z(z), &fit.z)
                .ok()
                .map(|lap| lap.cov_factor().clone());
            let out = run_mcmc(
                ctx,
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
            Ok(out.draws)
        }
        FitMethod::Grid => {
            let lap = LaplaceApprox::from_mode(|z| -ctx.log_post_z(z), &fit.z).ok();
            let bound = |i: usize, shift: f64| -> f64 {
                let lap = lap.as_ref().expect("checked");
                let mut z = lap.mode_z.clone();
                z[i] += shift * lap.sd()[i];
                ctx.params_from_z(&z).flatten()[i]
            };
            let (rate_lo, rate_hi, phi_lo, phi_hi) = if lap.is_some() {
                (
                    bound(0, -6.0).max(1e-4),
                    bound(0, 6.0).min(RATE_MAX - 1e-4),
                    bound(1, -6.0).max(PHI_MIN),
                    bound(1, 6.0).min(0.999),
                )
            } else {
                (1e-3, RATE_MAX - 1e-4, PHI_MIN, 0.999)
            };
            let linspace = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            };
            let rates = linspace(rate_lo, rate_hi, cfg.grid_rate_cells.max(2));
            let phis = linspace(phi_lo, phi_hi, cfg.grid_phi_cells.max(2));
            let post = grid_posterior(ctx, &rates, &phis)?;
            let template = ctx.template();
            let mut draws = Vec::new();
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
    }
}

/// Fit the arrival and penetration parameters to one or more observation
/// days, honoring the config's fit method, and return the posterior sample.
#[no_mangle]
pub unsafe extern "C" fn ptsq_fit(
    cfg: *const PtsqConfig,
    days: *const *const PtsqObservations,
    n_days: usize,
    out: *mut *mut PtsqFit,
) -> i32 {
    let Some(cfg) = cfg.as_ref() else {
        return misuse("config is null");
    };
    if out.is_null() {
        return misuse("out is null");
    }
    if days.is_null() || n_days == 0 {
        return misuse("no observation days");
    }
    let mut seqs = Vec::with_capacity(n_days);
    for i in 0..n_days {
        let Some(day) = (*days.add(i)).as_ref() else {
            return misuse("observation day is null");
        };
        seqs.push(day.0.clone());
    }
    guarded(|| {
        let grid = cfg.0.grid()?;
        let model = cfg.0.obs_model()?;
        let template = cfg.0.params()?;
        let ctx = LikelihoodContext::new(&grid, &model, template, &seqs, cfg.0.k_max)?;
        let fit = map_fit(
            &ctx,
            &FitOptions { starts: cfg.0.fit_starts, seed: cfg.0.seed, ..FitOptions::default() },
        )?;
        let draws = draws_for_method(&cfg.0, &ctx, &fit)?;
        let names = fit.params.names();
        let ws: Vec<f64> = draws.iter().map(|d| d.weight).collect();
        let mut means = Vec::with_capacity(names.len());
        let mut sds = Vec::with_capacity(names.len());
        for i in 0..names.len() {
            let vals: Vec<f64> = draws.iter().map(|d| d.params.flatten()[i]).collect();
            means.push(weighted_mean(&vals, &ws));
            sds.push(weighted_sd(&vals, &ws));
        }
        *out = Box::into_raw(Box::new(PtsqFit {
            names,
            draws,
            means,
            sds,
            log_lik: fit.log_lik,
            converged: fit.converged,
        }));
        Ok(())
    })
}

/// Number of fitted scalar parameters (rates, then penetration).
#[no_mangle]
pub unsafe extern "C" fn ptsq_fit_dim(fit: *const PtsqFit) -> usize {
    fit.as_ref().map_or(0, |f| f.names.len())
}

/// Name of parameter `i`; same copy semantics as [`ptsq_last_error`].
/// Returns 0 on a bad handle or index.
#[no_mangle]
pub unsafe extern "C" fn ptsq_fit_name(
    fit: *const PtsqFit,
    i: usize,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    let Some(fit) = fit.as_ref() else { return 0 };
    let Some(name) = fit.names.get(i) else { return 0 };
    let c = CString::new(name.as_str()).expect("no interior NUL in names");
    copy_str(&c, buf, cap)
}

/// Posterior mean of parameter `i` (NaN on a bad handle or index).
#[no_mangle]
pub unsafe extern "C" fn ptsq_fit_mean(fit: *const PtsqFit, i: usize) -> f64 {
    fit.as_ref().and_then(|f| f.means.get(i)).copied().unwrap_or(f64::NAN)
}

/// Posterior standard deviation of parameter `i` (NaN on a bad handle or
/// index).
#[no_mangle]
pub unsafe extern "C" fn ptsq_fit_sd(fit: *const PtsqFit, i: usize) -> f64 {
    fit.as_ref().and_then(|f| f.sds.get(i)).copied().unwrap_or(f64::NAN)
}

/// Maximized log likelihood (NaN on a bad handle).
#[no_mangle]
pub unsafe extern "C" fn ptsq_fit_log_lik(fit: *const PtsqFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.log_lik)
}

/// Whether the winning optimizer start met its tolerances.
#[no_mangle]
pub unsafe extern "C" fn ptsq_fit_converged(fit: *const PtsqFit) -> bool {
    fit.as_ref().is_some_and(|f| f.converged)
}

#[no_mangle]
pub unsafe extern "C" fn ptsq_fit_draw_count(fit: *const PtsqFit) -> usize {
    fit.as_ref().map_or(0, |f| f.draws.len())
}

/// Copy draw `j` into `values` (length `dim`, natural parameter order) and
/// its normalized weight into `*out_weight`.
#[no_mangle]
pub unsafe extern "C" fn ptsq_fit_draw(
    fit: *const PtsqFit,
    j: usize,
    values: *mut f64,
    dim: usize,
    out_weight: *mut f64,
) -> i32 {
    let Some(fit) = fit.as_ref() else {
        return misuse("fit is null");
    };
    let Some(draw) = fit.draws.get(j) else {
        return misuse("draw index out of range");
    };
    if values.is_null() || out_weight.is_null() {
        return misuse("out is null");
    }
    if dim != fit.names.len() {
        return misuse("dim does not match the fitted parameter count");
    }
    let flat = draw.params.flatten();
    std::ptr::copy_nonoverlapping(flat.as_ptr(), values, dim);
    *out_weight = draw.weight;
    PTSQ_OK
}

#[no_mangle]
pub unsafe extern "C" fn ptsq_fit_free(fit: *mut PtsqFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Posterior mean queue length per step, filtering at the config's own
/// parameters. `out_mean` must hold exactly the configured horizon.
#[no_mangle]
pub unsafe extern "C" fn ptsq_filter_mean(
    cfg: *const PtsqConfig,
    obs: *const PtsqObservations,
    out_mean: *mut f64,
    len: usize,
) -> i32 {
    let Some(cfg) = cfg.as_ref() else {
        return misuse("config is null");
    };
    let Some(obs) = obs.as_ref() else {
        return misuse("observations is null");
    };
    if out_mean.is_null() {
        return misuse("out is null");
    }
    guarded(|| {
        let grid = cfg.0.grid()?;
        if len != grid.horizon() {
            return Err(Error::InvalidParam(format!(
                "output buffer holds {len} steps, the config needs {}",
                grid.horizon()
            )));
        }
        let model = cfg.0.obs_model()?;
        let params = cfg.0.params()?;
        let start = stationary_cycle_start(&params.profile, &grid, cfg.0.k_max)?;
        let result = run_filter(
            &obs.0,
            &params,
            &grid,
            &model,
            &start.pmf,
            FilterOptions { keep_step_detail: true, keep_pmfs: false },
        )?;
        if let LogLik::Impossible { step } = result.log_lik {
            return Err(Error::Degenerate(format!(
                "observation at step {step} is impossible under the configured parameters"
            )));
        }
        for (i, s) in result.steps.iter().enumerate() {
            *out_mean.add(i) = s.mean;
        }
        Ok(())
    })
}

/// Posterior mean queue length per step, mixed over a fit's parameter
/// draws. `out_mean` must hold exactly the configured horizon.
#[no_mangle]
pub unsafe extern "C" fn ptsq_mixture_mean(
    cfg: *const PtsqConfig,
    obs: *const PtsqObservations,
    fit: *const PtsqFit,
    out_mean: *mut f64,
    len: usize,
) -> i32 {
    let Some(cfg) = cfg.as_ref() else {
        return misuse("config is null");
    };
    let Some(obs) = obs.as_ref() else {
        return misuse("observations is null");
    };
    let Some(fit) = fit.as_ref() else {
        return misuse("fit is null");
    };
    if out_mean.is_null() {
        return misuse("out is null");
    }
    guarded(|| {
        let grid = cfg.0.grid()?;
        if len != grid.horizon() {
            return Err(Error::InvalidParam(format!(
                "output buffer holds {len} steps, the config needs {}",
                grid.horizon()
            )));
        }
        let model = cfg.0.obs_model()?;
        let template = cfg.0.params()?;
        let days = [obs.0.clone()];
        let ctx = LikelihoodContext::new(&grid, &model, template, &days, cfg.0.k_max)?;
        let profile = state_mixture(&obs.0, &grid, &model, &ctx, &fit.draws)?;
        std::ptr::copy_nonoverlapping(profile.mean.as_ptr(), out_mean, len);
        Ok(())
    })
}
