//! Contrastive disentanglement for generative adversarial networks, at desk scale.
//!
//! The crate bundles everything needed to train and score a CD-GAN on a CPU:
//!
//! * [`autodiff`]: a small reverse-mode tape over row-major matrices plus Adam.
//! * [`latent`]: structured `(z, c)` sampling and positive-pair masks.
//! * [`models`]: MLP generator, discriminator and two-headed encoder.
//! * [`losses`]: adversarial, multi-positive contrastive, content and combined objectives.
//! * [`train`]: the alternating D / G / E optimization loop with few-label anchors.
//! * [`eval`]: k-means over encoder features scored with ACC, NMI and ARI.
//! * [`data`]: synthetic shape rasters and IDX image files.
//! * [`cli`]: config-driven experiment runner behind the `cdgan` binary.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod latent;
pub mod losses;
pub mod models;
pub mod rng;
pub mod train;

pub use error::{CdganError, Result};
