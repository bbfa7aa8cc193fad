//! Discrete-time queue model for a signalized intersection approach, with
//! Bayesian demand estimation from sparsely observed (probe) vehicle
//! trajectories.
//!
//! The pieces fit together as a pipeline:
//!
//! * [`grid`] — saturation-headway time grid and signal timing;
//! * [`arrival`] — cyclic Bernoulli arrival profiles (the demand model);
//! * [`queue`] — queue-length pmfs and their one-step transitions;
//! * [`kernel`] / [`observe`] — stop-position measurement model for probes;
//! * [`encode`] — raw trajectories to per-step observation sequences;
//! * [`sim`] — ground-truth simulator producing trajectories and probes;
//! * [`filter`] — forward filtering: queue posteriors and the data
//!   likelihood for one parameter vector;
//! * [`oracle`] — brute-force reference implementations for small horizons;
//! * [`inference`] — posterior computation over parameters (grid, Laplace +
//!   importance sampling, random-walk MCMC) plus evaluation metrics;
//! * [`config`] / [`io`] / [`harness`] — run configuration, file formats,
//!   and the Monte-Carlo study driver used by the CLI.
//!
//! All randomness flows from one `u64` seed through [`rng`] streams keyed by
//! role and replication, so everything here is reproducible bit-for-bit.

pub mod arrival;
pub mod config;
pub mod encode;
pub mod error;
pub mod filter;
pub mod grid;
pub mod harness;
pub mod inference;
pub mod io;
pub mod kernel;
pub mod observe;
pub mod oracle;
pub mod params;
pub mod queue;
pub mod rng;
pub mod sim;

pub use arrival::ArrivalProfile;
pub use error::{Error, Result};
pub use grid::DiscreteGrid;
pub use kernel::GaussKernel;
pub use observe::{ObsModel, ObservationSeq};
pub use params::TrafficParams;
pub use queue::QueuePmf;
