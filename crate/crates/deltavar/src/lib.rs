//! Power variations of higher-order finite differences, the constants of
//! their central limit theorems, exact simulators for iterated-integral
//! fractional Brownian motion and parabolic stochastic PDEs, and
//! bias-corrected parameter estimators built on top of all of that.
//!
//! The crate is organised bottom-up:
//!
//! - [`findiff`]: grid functions, forward differences `Δ_h^M`, and the
//!   Δ-power variation statistic `V_{q,M,s,N}`.
//! - [`constants`]: the deterministic constants appearing in the limit
//!   theorems — absolute Gaussian moments `τ_q`, the variance normaliser
//!   `μ_{M,s}`, correlation sequences `ρ_{M,s}(ℓ)`, the series
//!   `ρ²_{k,M,s}`, the CLT variance `σ²_{q,M,s}`, the fractional scaling
//!   constant `ν_H`, and the spectral constant `c_{α,γ,m}`.
//! - [`fbm`]: exact (covariance-factorisation) sampling of iterated-integral
//!   fractional Brownian motion and of its `M`-th order increments.
//! - [`spde`]: spectral simulation of linear and semilinear stochastic heat
//!   equations on an interval and of the stationary whole-line model.
//! - [`estimators`]: bias-corrected volatility and drift estimators with
//!   delta-method standard errors and CLT-based confidence intervals.
//!
//! Everything is deterministic given a seed: the only randomness source is
//! a counter-seeded ChaCha12 stream per replication.

pub mod constants;
pub mod error;
pub mod estimators;
pub mod fbm;
pub mod findiff;
pub mod linalg;
pub mod rng;
pub mod spde;
pub mod special;

pub use error::{Error, Result};
