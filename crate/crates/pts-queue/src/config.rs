//! Flat `key = value` run configuration.
//!
//! One file describes a complete scenario: signal timing, geometry, demand,
//! observation process, and estimation settings. Keys are dotted, values
//! are scalars or comma lists, `#` starts a comment. Unknown keys and
//! duplicate keys are errors — a typo must never silently fall back to a
//! default. All defaults together describe the reference intersection used
//! throughout the tests: a 90 s cycle with 35 s of green, two lanes, and a
//! 250 m link.
//!
//! The canonical rendering of a config (every key, sorted) is hashed into
//! run manifests so outputs can be traced back to their exact settings.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::arrival::ArrivalProfile;
use crate::encode::GeometryParams;
use crate::error::{Error, Result};
use crate::grid::DiscreteGrid;
use crate::kernel::GaussKernel;
use crate::observe::ObsModel;
use crate::params::TrafficParams;
use crate::sim::SimConfig;

/// Posterior computation backends for the `fit` pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    /// Gaussian approximation at the mode, importance-corrected.
    Laplace,
    /// Adaptive random-walk chains.
    Mcmc,
    /// Quadrature over a rate × penetration grid (two-parameter models).
    Grid,
}

impl std::str::FromStr for FitMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "laplace" => Ok(FitMethod::Laplace),
            "mcmc" => Ok(FitMethod::Mcmc),
            "grid" => Ok(FitMethod::Grid),
            other => Err(format!("unknown fit method '{other}' (laplace, mcmc, grid)")),
        }
    }
}

impl FitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMethod::Laplace => "laplace",
            FitMethod::Mcmc => "mcmc",
            FitMethod::Grid => "grid",
        }
    }
}

/// A fully resolved scenario configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Saturation flow per lane, vehicles per second.
    pub saturation_per_lane: f64,
    pub lanes: u32,
    pub cycle_s: f64,
    pub green_start_s: f64,
    pub green_s: f64,
    /// Analysis window length in hours.
    pub hours: f64,
    /// Demand as an hourly volume; ignored when explicit rates are given.
    pub volume_vph: f64,
    /// Piecewise demand: segment boundaries in seconds from cycle start.
    pub demand_breakpoints_s: Vec<f64>,
    /// Per-step arrival probabilities for the segments (empty = uniform).
    pub demand_rates: Vec<f64>,
    pub penetration: f64,
    pub noise_sd_slots: f64,
    pub noise_half_width: usize,
    pub jam_spacing_m: f64,
    pub link_len_m: f64,
    pub free_flow_mps: f64,
    pub sample_dt_s: f64,
    pub warmup_cycles: usize,
    pub seed: u64,
    pub k_max: usize,
    pub fit_method: FitMethod,
    pub fit_starts: usize,
    pub fit_draws: usize,
    pub mcmc_chains: usize,
    pub mcmc_warmup: usize,
    pub mcmc_iters: usize,
    pub grid_rate_cells: usize,
    pub grid_phi_cells: usize,
    pub eval_replications: u64,
    pub eval_hours: Vec<f64>,
    pub eval_levels: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            saturation_per_lane: 0.5,
            lanes: 2,
            cycle_s: 90.0,
            green_start_s: 55.0,
            green_s: 35.0,
            hours: 2.0,
            volume_vph: 720.0,
            demand_breakpoints_s: Vec::new(),
            demand_rates: Vec::new(),
            penetration: 0.1,
            noise_sd_slots: 1.0,
            noise_half_width: 2,
            jam_spacing_m: 7.5,
            link_len_m: 250.0,
            free_flow_mps: 15.0,
            sample_dt_s: 0.5,
            warmup_cycles: 50,
            seed: 0,
            k_max: 96,
            fit_method: FitMethod::Laplace,
            fit_starts: 4,
            fit_draws: 2000,
            mcmc_chains: 4,
            mcmc_warmup: 500,
            mcmc_iters: 1000,
            grid_rate_cells: 40,
            grid_phi_cells: 40,
            eval_replications: 40,
            eval_hours: vec![2.0, 4.0, 8.0, 16.0],
            eval_levels: vec![0.75, 0.85, 0.95],
        }
    }
}

fn parse_scalar<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config { line, msg: format!("cannot parse '{raw}' for key '{key}'") })
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<T>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|part| parse_scalar(line, key, part.trim())).collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(Error::Config {
                    line,
                    msg: format!("expected 'key = value', got '{stripped}'"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config { line, msg: format!("duplicate key '{key}'") });
            }
            cfg.apply(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one dotted key from its text form, then re-validate.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.apply(0, key.trim(), value.trim())?;
        self.validate()
    }

    fn apply(&mut self, line: usize, key: &str, value: &str) -> Result<()> {
        match key {
            "flow.saturation_per_lane" => {
                self.saturation_per_lane = parse_scalar(line, key, value)?
            }
            "geom.lanes" => self.lanes = parse_scalar(line, key, value)?,
            "signal.cycle_s" => self.cycle_s = parse_scalar(line, key, value)?,
            "signal.green_start_s" => self.green_start_s = parse_scalar(line, key, value)?,
            "signal.green_s" => self.green_s = parse_scalar(line, key, value)?,
            "window.hours" => self.hours = parse_scalar(line, key, value)?,
            "demand.volume_vph" => self.volume_vph = parse_scalar(line, key, value)?,
            "demand.breakpoints_s" => self.demand_breakpoints_s = parse_list(line, key, value)?,
            "demand.rates" => self.demand_rates = parse_list(line, key, value)?,
            "obs.penetration" => self.penetration = parse_scalar(line, key, value)?,
            "obs.noise_sd_slots" => self.noise_sd_slots = parse_scalar(line, key, value)?,
            "obs.noise_half_width" => self.noise_half_width = parse_scalar(line, key, value)?,
            "geom.jam_spacing_m" => self.jam_spacing_m = parse_scalar(line, key, value)?,
            "geom.link_len_m" => self.link_len_m = parse_scalar(line, key, value)?,
            "geom.free_flow_mps" => self.free_flow_mps = parse_scalar(line, key, value)?,
            "geom.sample_dt_s" => self.sample_dt_s = parse_scalar(line, key, value)?,
            "sim.warmup_cycles" => self.warmup_cycles = parse_scalar(line, key, value)?,
            "sim.seed" => self.seed = parse_scalar(line, key, value)?,
            "fit.k_max" => self.k_max = parse_scalar(line, key, value)?,
            "fit.method" => {
                self.fit_method = value.parse().map_err(|e| Error::Config { line, msg: e })?
            }
            "fit.starts" => self.fit_starts = parse_scalar(line, key, value)?,
            "fit.draws" => self.fit_draws = parse_scalar(line, key, value)?,
            "mcmc.chains" => self.mcmc_chains = parse_scalar(line, key, value)?,
            "mcmc.warmup" => self.mcmc_warmup = parse_scalar(line, key, value)?,
            "mcmc.iters" => self.mcmc_iters = parse_scalar(line, key, value)?,
            "grid.rate_cells" => self.grid_rate_cells = parse_scalar(line, key, value)?,
            "grid.phi_cells" => self.grid_phi_cells = parse_scalar(line, key, value)?,
            "eval.replications" => self.eval_replications = parse_scalar(line, key, value)?,
            "eval.hours" => self.eval_hours = parse_list(line, key, value)?,
            "eval.levels" => self.eval_levels = parse_list(line, key, value)?,
            other => return Err(Error::Config { line, msg: format!("unknown key '{other}'") }),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.demand_rates.is_empty() != self.demand_breakpoints_s.is_empty() {
            return Err(Error::InvalidParam(
                "demand.breakpoints_s and demand.rates must be given together".into(),
            ));
        }
        if !self.eval_levels.iter().all(|l| (0.0..1.0).contains(l) && *l > 0.0) {
            return Err(Error::InvalidParam("eval.levels must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Step length implied by saturation flow and lane count.
    pub fn delta_t(&self) -> Result<f64> {
        DiscreteGrid::delta_t_for_unit_flow(self.saturation_per_lane, self.lanes)
    }

    pub fn grid(&self) -> Result<DiscreteGrid> {
        let dt = self.delta_t()?;
        DiscreteGrid::new(
            dt,
            DiscreteGrid::seconds_to_steps(dt, self.cycle_s)?,
            DiscreteGrid::seconds_to_steps(dt, self.green_start_s)?,
            DiscreteGrid::seconds_to_steps(dt, self.green_s)?,
            DiscreteGrid::seconds_to_steps(dt, self.hours * 3600.0)?,
        )
    }

    pub fn geometry(&self) -> GeometryParams {
        GeometryParams {
            lanes: self.lanes,
            jam_spacing_m: self.jam_spacing_m,
            link_len_m: self.link_len_m,
            free_flow_mps: self.free_flow_mps,
            sample_dt_s: self.sample_dt_s,
        }
    }

    pub fn profile(&self) -> Result<ArrivalProfile> {
        let dt = self.delta_t()?;
        if self.demand_rates.is_empty() {
            ArrivalProfile::uniform(ArrivalProfile::rate_for_volume(self.volume_vph, dt)?)
        } else {
            let cycle = DiscreteGrid::seconds_to_steps(dt, self.cycle_s)?;
            let breakpoints = self
                .demand_breakpoints_s
                .iter()
                .map(|&s| DiscreteGrid::seconds_to_steps(dt, s))
                .collect::<Result<Vec<_>>>()?;
            ArrivalProfile::piecewise(breakpoints, self.demand_rates.clone(), cycle)
        }
    }

    pub fn obs_model(&self) -> Result<ObsModel> {
        Ok(ObsModel::new(GaussKernel::new(self.noise_sd_slots, self.noise_half_width)?))
    }

    pub fn params(&self) -> Result<TrafficParams> {
        TrafficParams::new(self.profile()?, self.penetration)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            grid: self.grid()?,
            profile: self.profile()?,
            phi: self.penetration,
            obs_model: self.obs_model()?,
            geometry: self.geometry(),
            warmup_cycles: self.warmup_cycles,
            seed: self.seed,
        })
    }

    /// Every key in sorted order with its effective value.
    pub fn canonical_string(&self) -> String {
        let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut pairs: Vec<(String, String)> = vec![
            ("demand.breakpoints_s".into(), join(&self.demand_breakpoints_s)),
            ("demand.rates".into(), join(&self.demand_rates)),
            ("demand.volume_vph".into(), self.volume_vph.to_string()),
            ("eval.hours".into(), join(&self.eval_hours)),
            ("eval.levels".into(), join(&self.eval_levels)),
            ("eval.replications".into(), self.eval_replications.to_string()),
            ("fit.draws".into(), self.fit_draws.to_string()),
            ("fit.k_max".into(), self.k_max.to_string()),
            ("fit.method".into(), self.fit_method.as_str().into()),
            ("fit.starts".into(), self.fit_starts.to_string()),
            ("flow.saturation_per_lane".into(), self.saturation_per_lane.to_string()),
            ("geom.free_flow_mps".into(), self.free_flow_mps.to_string()),
            ("geom.jam_spacing_m".into(), self.jam_spacing_m.to_string()),
            ("geom.lanes".into(), self.lanes.to_string()),
            ("geom.link_len_m".into(), self.link_len_m.to_string()),
            ("geom.sample_dt_s".into(), self.sample_dt_s.to_string()),
            ("grid.phi_cells".into(), self.grid_phi_cells.to_string()),
            ("grid.rate_cells".into(), self.grid_rate_cells.to_string()),
            ("mcmc.chains".into(), self.mcmc_chains.to_string()),
            ("mcmc.iters".into(), self.mcmc_iters.to_string()),
            ("mcmc.warmup".into(), self.mcmc_warmup.to_string()),
            ("obs.noise_half_width".into(), self.noise_half_width.to_string()),
            ("obs.noise_sd_slots".into(), self.noise_sd_slots.to_string()),
            ("obs.penetration".into(), self.penetration.to_string()),
            ("signal.cycle_s".into(), self.cycle_s.to_string()),
            ("signal.green_s".into(), self.green_s.to_string()),
            ("signal.green_start_s".into(), self.green_start_s.to_string()),
            ("sim.seed".into(), self.seed.to_string()),
            ("sim.warmup_cycles".into(), self.warmup_cycles.to_string()),
            ("window.hours".into(), self.hours.to_string()),
        ];
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex digest of the canonical rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }
}
