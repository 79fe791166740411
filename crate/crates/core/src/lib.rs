//! Quantification of discretization error in numerical ODE solutions.
//!
//! Residuals between noisy observations and a numerical solution are
//! modelled as `r_i ~ N(0, sigma_i^2)` with the isotonic constraint
//! `gamma^2 <= sigma_1^2 <= ... <= sigma_n^2`. The log-variance increments
//! carry a horseshoe-type shrinkage prior and the posterior is explored with
//! a Gibbs sampler that replaces the log-chi-square(1) likelihood of
//! `z_i = log r_i^2` by a ten-component Gaussian mixture.
//!
//! Module map:
//!
//! * [`ode`] – model definitions, fixed-step and reference integrators.
//! * [`observe`] – synthetic observations and residual series.
//! * [`dist`] – random variates and densities used by the sampler.
//! * [`gibbs`] – the sampler itself.
//! * [`posterior`] – credible and predictive bands.
//! * [`baseline`] – order-restricted maximum-likelihood comparator.
//! * [`config`], [`io`], [`pipeline`] – the file-driven workflow behind the CLI.

pub mod baseline;
pub mod config;
pub mod dist;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod observe;
pub mod ode;
pub mod pipeline;
pub mod posterior;

pub use error::{Error, Result};
