//! Analytic and Monte Carlo laboratory for planar isotropic Brownian
//! flows: correlation families, the n-point motion, the two-point radial
//! diffusion, a piecewise Lyapunov function, a deterministic control-flow
//! construction, and long-horizon shape statistics.

pub mod battery;
pub mod config;
pub mod control;
pub mod covariance;
pub mod error;
pub mod flow;
pub mod harness;
pub mod radial;
pub mod real;
pub mod seed;
pub mod shape;
pub mod stats;

pub use error::{Error, Result};
pub use real::Real;

/// Concrete aliases for the default (f64) precision.
pub type Family = covariance::CorrelationFamily<f64>;
pub type Family32 = covariance::CorrelationFamily<f32>;
pub type Spectrum = covariance::LyapunovSpectrum<f64>;
