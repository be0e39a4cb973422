//! Stochastic simulation on real hyperbolic spaces.
//!
//! The crate has four layers:
//!
//! * [`hypgeo`] — exact half-space-model geometry of `H^d` with curvature
//!   parameter `c` (sectional curvature `-c^2`): distances, exponential and
//!   logarithm maps, Fermi coordinates, distance to a geodesic line or
//!   segment, and the Laplacian of the squared distance. Also the bidisk
//!   `H^2 x H^2` product metric.
//! * [`kernels`] — special functions and the radial hyperbolic heat-kernel
//!   family: the rate constant `(2/c) log cosh(c sqrt(a))`, odd-dimension
//!   kernels by iterated descent, even-dimension kernels by quadrature, the
//!   radial log-derivative of the kernel, Gauss 2F1, the first-passage
//!   Laplace transform of the Jacobi diffusion, and the squared-Bessel
//!   density.
//! * [`sde`] — path simulation: square-root (CIR-type) diffusions with
//!   full-truncation Euler, first-passage detection, the exact
//!   change-of-measure importance sampler for rare barrier crossings,
//!   squared-Bessel time-change construction, hyperbolic Brownian motion and
//!   Brownian bridges by geodesic-step schemes, and bidisk bridges.
//! * [`estimators`] — hitting probabilities with confidence intervals,
//!   Monte Carlo Laplace transforms, exponential-rate regression,
//!   two-sample Kolmogorov-Smirnov tests and sub-Gaussian tail fits.
//!
//! Path generation is embarrassingly parallel and runs on rayon when the
//! default `parallel` feature is enabled. Every estimate is independent of
//! the worker count: each path owns a counter-based RNG stream keyed by
//! `(master seed, path index)` and reductions sum in path order.

pub mod error;
pub mod estimators;
pub mod hypgeo;
pub mod kernels;
pub mod parallel;
pub mod sde;

mod quad;
mod rng;
mod taylor;

pub use error::{Error, Result};
