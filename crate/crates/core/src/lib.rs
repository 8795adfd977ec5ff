//! Drift estimation for multivariate SDEs from many discretely observed
//! trajectories.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`] – dense tensors, a static reverse-mode graph, Adam with a
//!   plateau schedule and a binary parameter checkpoint format.
//! * [`sde`] – the drift zoo, Euler–Maruyama simulation and increment pairs.
//! * [`diffusion`] – VP/VE noising schedules, the conditional denoising
//!   objective and the training loop.
//! * [`nets`] – the denoiser and regression architectures.
//! * [`estimators`] – the denoising drift estimator, the closed-form
//!   Euler–Maruyama denoiser and the reverse-time sampler.
//! * [`baselines`] – Nadaraya–Watson, B-spline ridge and Hermite projection
//!   estimators for i.i.d. trajectories.
//! * [`harness`] – evaluation metrics, experiment orchestration and reports.

pub mod autodiff;
pub mod baselines;
pub mod diffusion;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod nets;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
