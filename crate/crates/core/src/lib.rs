//! Sparse location-scale regression with log-concave noise via the exp-Lasso.
//!
//! The estimator minimizes `exp[R_n(β, σ)] + λ‖β‖₁` over coefficients and
//! scale. Its tuning parameter can be calibrated without knowing the noise
//! scale from Monte Carlo quantiles of a pivotal statistic.

pub mod calibration;
pub mod cli;
pub mod design;
pub mod error;
pub mod experiments;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
