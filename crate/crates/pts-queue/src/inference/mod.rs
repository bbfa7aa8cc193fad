//! Parameter estimation and uncertainty quantification.
//!
//! Everything here works on the unconstrained parameterization of
//! [`transform::ParamSpace`]: arrival rates and the penetration probability
//! are mapped to the whole real line, the optimizer and samplers roam
//! freely, and the bounded-box uniform prior turns into a Jacobian term.
//!
//! The estimation pipeline is
//!
//! 1. [`likelihood::LikelihoodContext`] — exact data log-likelihood via the
//!    forward filter, with a stationary warm-start per parameter value,
//! 2. [`fit::map_fit`] — multi-start Nelder-Mead point estimate,
//! 3. [`laplace::LaplaceApprox`] — Gaussian approximation at the mode from a
//!    finite-difference Hessian, with
//!    [`laplace::importance_sample`] re-weighting its draws to the exact
//!    posterior, and
//! 4. [`mcmc::run_mcmc`] — adaptive random-walk Metropolis with split-R̂
//!    diagnostics when the Gaussian approximation is in doubt.
//!
//! [`gridpost`] computes the posterior by quadrature for two-parameter
//! models (a brute-force cross-check), [`summary`] holds weighted posterior
//! summaries and the filtered-state mixture, and [`metrics`] the evaluation
//! statistics used by the study harness.

pub mod fit;
pub mod gridpost;
pub mod laplace;
pub mod likelihood;
pub mod mcmc;
pub mod metrics;
pub mod neldermead;
pub mod summary;
pub mod transform;

pub use fit::{map_fit, FitOptions, MapFit};
pub use gridpost::{grid_posterior, GridPosterior};
pub use laplace::{fd_hessian, importance_sample, Draw, ImportanceFit, LaplaceApprox};
pub use likelihood::LikelihoodContext;
pub use mcmc::{run_mcmc, McmcOptions, McmcOut};
pub use metrics::{interval_stats, mape, ErrorStats, IntervalStats};
pub use neldermead::{NelderMead, OptOutcome};
pub use summary::{
    central_interval, state_mixture, weighted_hdi, weighted_mean, weighted_quantile, weighted_sd,
    CredInterval, StateProfile,
};
pub use transform::{ParamSpace, PHI_MIN, RATE_MAX};
