//! Multi-start maximum-likelihood point estimation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::params::TrafficParams;
use crate::rng::{stream, StreamRole};

use super::likelihood::LikelihoodContext;
use super::neldermead::NelderMead;

/// Settings for [`map_fit`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Optimizer restarts; the first uses the context template, the rest
    /// are drawn around the center of the feasible box.
    pub starts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub replication: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { starts: 4, max_iters: 600, seed: 0, replication: 0 }
    }
}

/// A point estimate in both parameterizations.
#[derive(Debug, Clone)]
pub struct MapFit {
    pub params: TrafficParams,
    pub z: Vec<f64>,
    pub log_lik: f64,
    /// True when the winning restart met the simplex tolerances.
    pub converged: bool,
    pub evals: usize,
}

/// Maximize the data likelihood over the feasible box.
pub fn map_fit(ctx: &LikelihoodContext, opts: &FitOptions) -> Result<MapFit> {
    if opts.starts == 0 {
        return Err(Error::InvalidParam("need at least one optimizer start".into()));
    }
    let rate_count = ctx.space().rate_count();
    let mut rng = stream(opts.seed, opts.replication, StreamRole::OptimizerStarts);
    let optimizer = NelderMead { max_iters: opts.max_iters, ..Default::default() };

    // High rates saturate the queue and carry zero likelihood, so random
    // starts are biased toward the subcritical part of the box, and starts
    // that land on the dead region are redrawn rather than wasted.
    let max_attempts = opts.starts * 20;
    let mut best: Option<super::neldermead::OptOutcome> = None;
    let mut evals = 0;
    let mut launched = 0;
    for attempt in 0..max_attempts {
        let z0: Vec<f64> = if attempt == 0 {
            ctx.z_from_params(ctx.template())
        } else {
            let mut z: Vec<f64> =
                (0..rate_count).map(|_| -0.75 + rng.sample::<f64, _>(StandardNormal)).collect();
            z.push(1.25 * rng.sample::<f64, _>(StandardNormal));
            z
        };
        evals += 1;
        if !ctx.neg_log_lik_z(&z0).is_finite() {
            continue;
        }
        let out = optimizer.minimize(|z| ctx.neg_log_lik_z(z), &z0);
        evals += out.evals;
        if best.as_ref().map_or(true, |b| out.f < b.f) {
            best = Some(out);
        }
        launched += 1;
        if launched == opts.starts {
            break;
        }
    }

    let winner = match best {
        Some(b) if b.f.is_finite() => b,
        _ => {
            return Err(Error::Degenerate(
                "likelihood vanished at every point the optimizer visited".into(),
            ))
        }
    };
    Ok(MapFit {
        params: ctx.params_from_z(&winner.x),
        log_lik: -winner.f,
        z: winner.x,
        converged: winner.converged,
        evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::ArrivalProfile;
    use crate::encode::GeometryParams;
    use crate::grid::DiscreteGrid;
    use crate::kernel::GaussKernel;
    use crate::observe::ObsModel;
    use crate::sim::{simulate, SimConfig};

    #[test]
    fn recovers_rate_and_penetration_from_simulated_data() {
        // Two hours of a busy approach with a thirty percent probe share.
        let grid = DiscreteGrid::new(1.0, 90, 55, 35, 80 * 90).unwrap();
        let model = ObsModel::new(GaussKernel::new(1.0, 2).unwrap());
        let cfg = SimConfig {
            grid: grid.clone(),
            profile: ArrivalProfile::uniform(0.2).unwrap(),
            phi: 0.3,
            obs_model: model.clone(),
            geometry: GeometryParams {
                lanes: 2,
                jam_spacing_m: 7.5,
                link_len_m: 250.0,
                free_flow_mps: 15.0,
                sample_dt_s: 0.5,
            },
            warmup_cycles: 50,
            seed: 2024,
        };
        let out = simulate(&cfg, 0, false).unwrap();
        let days = [out.obs];

        // Deliberately wrong template start.
        let template = TrafficParams::new(ArrivalProfile::uniform(0.45).unwrap(), 0.6).unwrap();
        let ctx = LikelihoodContext::new(&grid, &model, template, &days, 96).unwrap();
        let fit = map_fit(&ctx, &FitOptions { starts: 3, ..Default::default() }).unwrap();

        let flat = fit.params.flatten();
        assert!((flat[0] - 0.2).abs() / 0.2 < 0.15, "rate estimate {} too far from 0.2", flat[0]);
        assert!((flat[1] - 0.3).abs() < 0.1, "phi estimate {} too far from 0.3", flat[1]);
        // The optimum beats the truth's own likelihood (it is the MLE).
        let truth = TrafficParams::new(ArrivalProfile::uniform(0.2).unwrap(), 0.3).unwrap();
        assert!(fit.log_lik >= ctx.log_lik(&truth) - 1e-6);
    }

    #[test]
    fn deterministic_given_seed() {
        let grid = DiscreteGrid::new(1.0, 10, 6, 4, 200).unwrap();
        let model = ObsModel::new(GaussKernel::new(1.0, 2).unwrap());
        let truth = TrafficParams::new(ArrivalProfile::uniform(0.25).unwrap(), 0.5).unwrap();
        // Hand-built observation day.
        let day = crate::observe::ObservationSeq::from_events(
            200,
            &[(3, 3), (17, 5), (38, 2), (57, 4), (101, 3), (144, 1), (168, 4)],
        )
        .unwrap();
        let days = [day];
        let ctx = LikelihoodContext::new(&grid, &model, truth, &days, 48).unwrap();
        let opts = FitOptions { starts: 3, seed: 7, ..Default::default() };
        let a = map_fit(&ctx, &opts).unwrap();
        let b = map_fit(&ctx, &opts).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.log_lik, b.log_lik);
    }
}
