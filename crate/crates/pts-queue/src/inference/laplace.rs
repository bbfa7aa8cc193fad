//! Gaussian approximation at the mode and importance re-weighting.
//!
//! The observed information is a central finite-difference Hessian of the
//! negative log-likelihood at the MAP point. Its inverse gives a Gaussian
//! posterior approximation that is cheap to sample; importance weights
//! against the exact posterior correct the approximation error, and the
//! effective sample size says how trustworthy the correction is.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::params::TrafficParams;
use crate::rng::{stream, StreamRole};

use super::likelihood::LikelihoodContext;
use super::summary::log_sum_exp;

/// Relative step for finite-difference second derivatives.
pub const FD_REL_STEP: f64 = 1e-3;

/// Importance fits whose effective sample size falls below this fraction of
/// the nominal size are flagged.
pub const LOW_ESS_FRAC: f64 = 0.05;

/// Central finite-difference Hessian of `f` at `x`.
///
/// Steps are `rel_step * max(1, |x_i|)` per coordinate. Cost is
/// `2 d + 2 d (d - 1) + 1` evaluations.
pub fn fd_hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], rel_step: f64) -> DMatrix<f64> {
    let d = x.len();
    let h: Vec<f64> = x.iter().map(|&xi| rel_step * xi.abs().max(1.0)).collect();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(d, d);
    let mut probe = x.to_vec();

    for i in 0..d {
        probe[i] = x[i] + h[i];
        let fp = f(&probe);
        probe[i] = x[i] - h[i];
        let fm = f(&probe);
        probe[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut eval_at = |si: f64, sj: f64| {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = f(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let fpp = eval_at(1.0, 1.0);
            let fpm = eval_at(1.0, -1.0);
            let fmp = eval_at(-1.0, 1.0);
            let fmm = eval_at(-1.0, -1.0);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Gaussian posterior approximation `N(mode, H^{-1})` in the unconstrained
/// space.
#[derive(Debug, Clone)]
pub struct LaplaceApprox {
    pub mode_z: Vec<f64>,
    /// Possibly jittered observed information (precision matrix).
    pub precision: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    /// Lower Cholesky factor of `cov`, used for sampling.
    l_cov: DMatrix<f64>,
    ln_det_precision: f64,
    /// Diagonal inflation that was needed to make the information matrix
    /// positive definite (zero for healthy fits).
    pub jitter: f64,
}

impl LaplaceApprox {
    /// Build the approximation from the negative log-density `nll` around
    /// its minimizer `mode_z`.
    pub fn from_mode<F: FnMut(&[f64]) -> f64>(nll: F, mode_z: &[f64]) -> Result<Self> {
        let mut hess = fd_hessian(nll, mode_z, FD_REL_STEP);
        if hess.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "curvature at the mode is not finite; the mode may sit on a likelihood cliff"
                    .into(),
            ));
        }
        // Symmetrize away finite-difference asymmetry.
        hess = (&hess + hess.transpose()) * 0.5;

        let scale = hess.diagonal().amax().max(1e-12);
        let mut jitter = 0.0;
        let chol = loop {
            let attempt = &hess + DMatrix::identity(hess.nrows(), hess.ncols()) * jitter;
            if let Some(c) = Cholesky::new(attempt) {
                break c;
            }
            jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 10.0 };
            if jitter > scale {
                return Err(Error::Numerical(
                    "observed information is not positive definite even after inflation".into(),
                ));
            }
        };
        let precision = &hess + DMatrix::identity(hess.nrows(), hess.ncols()) * jitter;
        let ln_det_precision = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let cov = chol.inverse();
        let l_cov = Cholesky::new(cov.clone())
            .ok_or_else(|| {
                Error::Numerical("covariance lost positive definiteness when inverted".into())
            })?
            .l();
        Ok(LaplaceApprox {
            mode_z: mode_z.to_vec(),
            precision,
            cov,
            l_cov,
            ln_det_precision,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.mode_z.len()
    }

    /// Marginal standard deviations.
    pub fn sd(&self) -> Vec<f64> {
        self.cov.diagonal().iter().map(|v| v.sqrt()).collect()
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cov_factor(&self) -> &DMatrix<f64> {
        &self.l_cov
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let xi = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &self.l_cov * xi;
        self.mode_z.iter().zip(step.iter()).map(|(m, s)| m + s).collect()
    }

    /// Log density of the approximation at `z`.
    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        let diff =
            DVector::from_iterator(self.dim(), z.iter().zip(&self.mode_z).map(|(a, b)| a - b));
        let quad = (&self.precision * &diff).dot(&diff);
        0.5 * self.ln_det_precision
            - 0.5 * self.dim() as f64 * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * quad
    }
}

/// One posterior draw with its self-normalized weight.
#[derive(Debug, Clone)]
pub struct Draw {
    pub params: TrafficParams,
    pub z: Vec<f64>,
    /// Unnormalized log posterior density (unconstrained space).
    pub log_post: f64,
    /// Self-normalized weight; sums to one over a draw set.
    pub weight: f64,
}

/// An importance-weighted posterior sample.
#[derive(Debug, Clone)]
pub struct ImportanceFit {
    pub draws: Vec<Draw>,
    pub ess: f64,
    pub low_ess: bool,
}

/// Generic core: sample `n` points from `proposal` and weight them against
/// `log_target`. Returns draws, their log-target values, and normalized
/// weights.
pub fn importance_weights<F, R>(
    mut log_target: F,
    proposal: &LaplaceApprox,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::InvalidParam("importance sample size must be positive".into()));
    }
    let mut zs = Vec::with_capacity(n);
    let mut log_tgt = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);
    for _ in 0..n {
        let z = proposal.sample(rng);
        let lt = log_target(&z);
        log_w.push(lt - proposal.log_pdf(&z));
        log_tgt.push(lt);
        zs.push(z);
    }
    let norm = log_sum_exp(log_w.iter().copied());
    if !norm.is_finite() {
        return Err(Error::Degenerate("every importance draw had zero posterior density".into()));
    }
    let weights: Vec<f64> = log_w.iter().map(|lw| (lw - norm).exp()).collect();
    Ok((zs, log_tgt, weights))
}

/// Importance-corrected posterior sample for a fitted model.
pub fn importance_sample(
    ctx: &LikelihoodContext,
    proposal: &LaplaceApprox,
    n: usize,
    seed: u64,
    replication: u64,
) -> Result<ImportanceFit> {
    let mut rng = stream(seed, replication, StreamRole::PosteriorDraws);
    let (zs, log_tgt, weights) = importance_weights(|z| ctx.log_post_z(z), proposal, n, &mut rng)?;
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let draws = zs
        .into_iter()
        .zip(log_tgt)
        .zip(&weights)
        .map(|((z, lt), &w)| Draw { params: ctx.params_from_z(&z), z, log_post: lt, weight: w })
        .collect();
    Ok(ImportanceFit { draws, ess, low_ess: ess < LOW_ESS_FRAC * n as f64 })
}
