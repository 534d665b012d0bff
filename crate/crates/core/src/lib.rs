//! Uncertainty quantification toolkit.
//!
//! - [`prob`]: Gaussian and Gamma distributions, sample moments, grid densities,
//!   kernel density estimation and the clipping remedy for density tails.
//! - [`info`]: Shannon entropy and relative entropy, numerical and closed form.
//! - [`dynamics`]: linear, Lorenz-63, Ornstein-Uhlenbeck and cubic models,
//!   ensembles, and a random incompressible flow built from Fourier modes.
//! - [`bayes`]: Gaussian Bayesian updates and the repeated-observation law.
//! - [`lada`]: Lagrangian tracers and the closed-form conditional Gaussian filter.
//! - [`diagnostics`]: parameter estimation with latent-state uncertainty and
//!   Okubo-Weiss eddy identification.
//! - [`calibrate`]: fitting an OU surrogate from mean, variance and decorrelation time.
//! - [`experiments`]: reproducible experiment drivers behind the `uqkit` binary.
//!
//! ```
//! use uqkit::info::shannon_entropy_gaussian;
//! use uqkit::prob::GaussianDist;
//!
//! let h = shannon_entropy_gaussian(&GaussianDist::univariate(0.0, 1.0)?)?;
//! assert!((h - 1.418_938_5).abs() < 1e-7);
//! # Ok::<(), uqkit::Error>(())
//! ```

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod bayes;
pub mod calibrate;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod info;
pub mod lada;
pub mod prob;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;
