//! Scout particle filtering on truncated Taylor polynomial maps.
//!
//! * [`polyalg`] – truncated multivariate Taylor arithmetic, composition and
//!   inversion of polynomial maps.
//! * [`stochastic`] – Gaussian and uniform densities, reproducible random
//!   streams, log-domain weight normalization and degeneracy diagnostics.
//! * [`filters`] – the scout particle filter and the baseline filters it is
//!   compared against.
//! * [`scenarios`] – benchmark problems, truth simulation and jet transport.
//! * [`harness`] – Monte Carlo campaigns, metrics, result files and the CLI.

pub mod polyalg;
pub mod stochastic;
pub mod scenarios;
pub mod filters;
pub mod harness;
