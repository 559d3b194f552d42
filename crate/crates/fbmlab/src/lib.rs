//! Pathwise stochastic integration with respect to fractional Brownian
//! motion (Hurst index H > 1/2), and the trading strategies it supports in
//! a fractional Black-Scholes market.
//!
//! The crate is organized around six pieces:
//!
//! - [`fbm`]: exact-law path generation on arbitrary grids of [0,1]
//!   (Cholesky; circulant-embedding fast path on uniform grids) and exact
//!   conditional refinement.
//! - [`frac`]: Riemann-Liouville one-sided fractional derivatives, the
//!   weighted integrand norm, and the generalized Lebesgue-Stieltjes
//!   integral built from them, with an independent Riemann-Stieltjes route
//!   for cross-checking.
//! - [`blocks`]: the zeta-weighted block partition accumulating at 1, with
//!   per-block sub-grids and truncation rules.
//! - [`constructions`]: stopping-time integrand constructions: divergence
//!   to infinity, terminal values with a prescribed distribution, improper
//!   representation of arbitrary random variables, and replication of
//!   Holder-terminal claims.
//! - [`market`]: bond/stock dynamics, self-financing portfolio ledgers,
//!   strong arbitrage, weak hedging and the drift-corrected Holder hedge.
//! - [`verify`]: statistical oracles (small-ball estimate, sign-change
//!   probabilities, Kolmogorov-Smirnov, Holder-regularity diagnostics,
//!   chain-rule residual sweeps).

pub mod blocks;
pub mod claims;
pub mod constructions;
pub mod error;
pub mod fbm;
mod fft;
pub mod frac;
pub mod grid;
mod linalg;
pub mod market;
pub mod report;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{FbmLabError, Result};
pub use fbm::{conditional_extension, fbm_covariance, generate_fbm, FbmPath, FbmSampler};
pub use grid::{AlphaParam, HurstParam, TimeGrid};
