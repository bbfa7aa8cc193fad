//! Adaptive random-walk Metropolis sampling.
//!
//! Proposals are Gaussian steps shaped by a supplied covariance factor
//! (usually the Laplace approximation's); a Robbins-Monro recursion tunes
//! the global step scale toward the classic 0.234 acceptance rate during
//! warmup, after which the kernel is fixed and draws are collected from
//! several independent chains. Split-R̂ over the pooled halves flags
//! non-mixing runs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRole};

use super::laplace::Draw;
use super::likelihood::LikelihoodContext;

/// Chains whose split-R̂ exceeds this are reported as unmixed.
pub const RHAT_WARN_THRESHOLD: f64 = 1.05;

/// Settings for [`run_mcmc`].
#[derive(Debug, Clone)]
pub struct McmcOptions {
    pub chains: usize,
    /// Adaptation steps per chain, discarded.
    pub warmup: usize,
    /// Retained draws per chain.
    pub iters: usize,
    pub seed: u64,
    pub replication: u64,
    pub target_accept: f64,
    /// Scale of the Gaussian jitter applied to each chain's start.
    pub init_jitter: f64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            chains: 4,
            warmup: 500,
            iters: 1000,
            seed: 0,
            replication: 0,
            target_accept: 0.234,
            init_jitter: 0.5,
        }
    }
}

/// Pooled sample plus per-chain diagnostics.
#[derive(Debug, Clone)]
pub struct McmcOut {
    /// All post-warmup draws, uniformly weighted.
    pub draws: Vec<Draw>,
    /// Raw unconstrained draws per chain (for diagnostics).
    pub chains: Vec<Vec<Vec<f64>>>,
    pub accept_rates: Vec<f64>,
    pub split_rhat: Vec<f64>,
    pub rhat_warn: bool,
    pub final_scales: Vec<f64>,
}

/// Generic sampler core over an arbitrary log density.
///
/// Returns per-chain draws, acceptance rates, and adapted scales.
pub fn run_chains<F: Fn(&[f64]) -> f64>(
    log_post: F,
    init_z: &[f64],
    proposal_factor: Option<&DMatrix<f64>>,
    opts: &McmcOptions,
) -> Result<(Vec<Vec<Vec<f64>>>, Vec<f64>, Vec<f64>)> {
    let dim = init_z.len();
    if opts.chains < 2 {
        return Err(Error::InvalidParam(
            "need at least two chains for convergence diagnostics".into(),
        ));
    }
    if opts.iters < 2 {
        return Err(Error::InvalidParam("need at least two retained draws".into()));
    }
    let identity = DMatrix::identity(dim, dim);
    let factor = proposal_factor.unwrap_or(&identity);
    if factor.nrows() != dim || factor.ncols() != dim {
        return Err(Error::InvalidParam(format!(
            "proposal factor is {}x{}, parameters have dimension {dim}",
            factor.nrows(),
            factor.ncols()
        )));
    }

    let mut all_chains = Vec::with_capacity(opts.chains);
    let mut accept_rates = Vec::with_capacity(opts.chains);
    let mut final_scales = Vec::with_capacity(opts.chains);

    for chain in 0..opts.chains {
        let mut rng = stream(opts.seed, opts.replication, StreamRole::Chain(chain as u16));
        let shaped_step = |rng: &mut rand_chacha::ChaCha12Rng| -> DVector<f64> {
            let xi = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            factor * xi
        };

        // Jittered start; fall back toward the supplied point if the jitter
        // lands on zero density.
        let mut z = init_z.to_vec();
        let mut lp = f64::NEG_INFINITY;
        for attempt in 0..50 {
            let damp = opts.init_jitter / (1.0 + attempt as f64);
            let step = shaped_step(&mut rng);
            let cand: Vec<f64> =
                init_z.iter().zip(step.iter()).map(|(i, s)| i + damp * s).collect();
            lp = log_post(&cand);
            if lp > f64::NEG_INFINITY {
                z = cand;
                break;
            }
        }
        if lp == f64::NEG_INFINITY {
            lp = log_post(&z);
        }

        // Robbins-Monro on the log step scale during warmup.
        let mut ln_scale = (2.38 / (dim as f64).sqrt()).ln();
        let mut accepted = 0usize;
        let mut draws = Vec::with_capacity(opts.iters);

        for it in 0..(opts.warmup + opts.iters) {
            let scale = ln_scale.exp();
            let step = shaped_step(&mut rng);
            let cand: Vec<f64> = z.iter().zip(step.iter()).map(|(zi, s)| zi + scale * s).collect();
            let lp_cand = log_post(&cand);

            let log_alpha = if lp_cand == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else if lp == f64::NEG_INFINITY {
                f64::INFINITY
            } else {
                lp_cand - lp
            };
            let acc_prob = if log_alpha >= 0.0 { 1.0 } else { log_alpha.exp() };
            if rng.gen::<f64>() < acc_prob {
                z = cand;
                lp = lp_cand;
                if it >= opts.warmup {
                    accepted += 1;
                }
            }

            if it < opts.warmup {
                let gamma = (it as f64 + 1.0).powf(-0.66);
                ln_scale += gamma * (acc_prob - opts.target_accept);
            } else {
                draws.push(z.clone());
            }
        }

        all_chains.push(draws);
        accept_rates.push(accepted as f64 / opts.iters as f64);
        final_scales.push(ln_scale.exp());
    }
    Ok((all_chains, accept_rates, final_scales))
}

/// Split-R̂ per coordinate: each chain is halved and the usual
/// between/within variance ratio is computed over the half-sequences.
pub fn split_rhat(chains: &[Vec<Vec<f64>>]) -> Vec<f64> {
    assert!(!chains.is_empty());
    let dim = chains[0][0].len();
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if half < 2 {
        return vec![f64::INFINITY; dim];
    }

    (0..dim)
        .map(|d| {
            let mut seq_means = Vec::with_capacity(chains.len() * 2);
            let mut seq_vars = Vec::with_capacity(chains.len() * 2);
            for chain in chains {
                for part in [&chain[..half], &chain[chain.len() - half..]] {
                    let mean = part.iter().map(|z| z[d]).sum::<f64>() / half as f64;
                    let var = part.iter().map(|z| (z[d] - mean).powi(2)).sum::<f64>()
                        / (half as f64 - 1.0);
                    seq_means.push(mean);
                    seq_vars.push(var);
                }
            }
            let m = seq_means.len() as f64;
            let grand = seq_means.iter().sum::<f64>() / m;
            let b = half as f64 / (m - 1.0)
                * seq_means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
            let w = seq_vars.iter().sum::<f64>() / m;
            if w <= 0.0 {
                if b <= 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                let var_plus = (half as f64 - 1.0) / half as f64 * w + b / half as f64;
                (var_plus / w).sqrt()
            }
        })
        .collect()
}

/// Sample the parameter posterior of a fitted model.
pub fn run_mcmc(
    ctx: &LikelihoodContext,
    init_z: &[f64],
    proposal_factor: Option<&DMatrix<f64>>,
    opts: &McmcOptions,
) -> Result<McmcOut> {
    let (chains, accept_rates, final_scales) =
        run_chains(|z| ctx.log_post_z(z), init_z, proposal_factor, opts)?;
    let rhat = split_rhat(&chains);
    let rhat_warn = rhat.iter().any(|r| !(*r <= RHAT_WARN_THRESHOLD));

    let n_total: usize = chains.iter().map(|c| c.len()).sum();
    let w = 1.0 / n_total as f64;
    let mut draws = Vec::with_capacity(n_total);
    for chain in &chains {
        for z in chain {
            draws.push(Draw {
                params: ctx.params_from_z(z),
                z: z.clone(),
                log_post: ctx.log_post_z(z),
                weight: w,
            });
        }
    }
    Ok(McmcOut { draws, chains, accept_rates, split_rhat: rhat, rhat_warn, final_scales })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_opts(seed: u64) -> McmcOptions {
        McmcOptions { chains: 4, warmup: 800, iters: 1500, seed, ..Default::default() }
    }

    #[test]
    fn samples_a_shifted_gaussian_correctly() {
        // Independent N(1, 1) and N(-2, 0.25).
        let lp = |z: &[f64]| -0.5 * (z[0] - 1.0).powi(2) - 0.5 * (z[1] + 2.0).powi(2) / 0.25;
        let (chains, accept, _) = run_chains(lp, &[0.0, 0.0], None, &gaussian_opts(3)).unwrap();
        let rhat = split_rhat(&chains);
        assert!(rhat.iter().all(|r| *r < RHAT_WARN_THRESHOLD), "rhat {rhat:?}");
        for a in &accept {
            assert!((0.1..0.5).contains(a), "acceptance {a}");
        }

        let all: Vec<&Vec<f64>> = chains.iter().flatten().collect();
        let n = all.len() as f64;
        let mean0 = all.iter().map(|z| z[0]).sum::<f64>() / n;
        let mean1 = all.iter().map(|z| z[1]).sum::<f64>() / n;
        assert!((mean0 - 1.0).abs() < 0.1, "mean0 {mean0}");
        assert!((mean1 + 2.0).abs() < 0.06, "mean1 {mean1}");
        let sd1 = (all.iter().map(|z| (z[1] - mean1).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd1 - 0.5).abs() < 0.08, "sd1 {sd1}");
    }

    #[test]
    fn deterministic_for_a_fixed_seed_and_replication() {
        let lp = |z: &[f64]| -0.5 * z.iter().map(|x| x * x).sum::<f64>();
        let opts = McmcOptions { chains: 2, warmup: 50, iters: 60, seed: 9, ..Default::default() };
        let (a, _, _) = run_chains(lp, &[0.2, -0.1], None, &opts).unwrap();
        let (b, _, _) = run_chains(lp, &[0.2, -0.1], None, &opts).unwrap();
        assert_eq!(a, b);
        let other = McmcOptions { replication: 1, ..opts };
        let (c, _, _) = run_chains(lp, &[0.2, -0.1], None, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_rhat_flags_disagreeing_chains() {
        // Two chains stuck at different constants with tiny wiggle.
        let make = |center: f64, phase: f64| -> Vec<Vec<f64>> {
            (0..100).map(|i| vec![center + 1e-3 * ((i as f64) + phase).sin()]).collect()
        };
        let bad = [make(0.0, 0.0), make(5.0, 0.3)];
        let rhat = split_rhat(&bad);
        assert!(rhat[0] > 10.0, "rhat {rhat:?}");

        // The same wiggle around a common center mixes fine.
        let good = [make(0.0, 0.0), make(0.0, 0.7)];
        let rhat = split_rhat(&good);
        assert!(rhat[0] < 1.2, "rhat {rhat:?}");
    }

    #[test]
    fn too_few_chains_or_draws_are_rejected() {
        let lp = |_: &[f64]| 0.0;
        let opts = McmcOptions { chains: 1, ..Default::default() };
        assert!(run_chains(lp, &[0.0], None, &opts).is_err());
        let opts = McmcOptions { iters: 1, ..Default::default() };
        assert!(run_chains(lp, &[0.0], None, &opts).is_err());
    }
}
