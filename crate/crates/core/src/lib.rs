//! Continuous low-rank adaptation (CoLoRA) reduced models for parameterized PDEs.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense SVD and least-squares kernels.
//! - [`autodiff`]: reverse-mode tape, second-order dual numbers, latent Jacobians.
//! - [`net`]: CoLoRA layers, the reduced network, the hyper-network, normalization.
//! - [`pde`]: full-order finite-difference models, time integrators, datasets.
//! - [`pretrain`]: offline fitting of network and hyper-network parameters.
//! - [`online`]: data-driven forecasting and Neural Galerkin latent integration.
//! - [`baselines`]: POD best-approximation and parameter interpolation.
//! - [`harness`]: file formats, configuration, experiment drivers and the CLI.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod net;
pub mod online;
pub mod pde;
pub mod pretrain;

pub use error::{Error, Result};
