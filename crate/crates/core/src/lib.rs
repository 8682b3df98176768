//! Confound-aware deep clustering.
//!
//! The crate clusters data in the latent space of a conditional variational
//! autoencoder while suppressing a designated confounding factor. The
//! confounder is fed to the decoder, a pairwise-KL surrogate bounds the
//! mutual information between the latent code and the confounder, and a
//! soft k-means head with EMA-updated centroids provides the partition.
//!
//! Modules:
//! - [`datasets`]: dataset model, synthetic confounded generators, on-disk format.
//! - [`networks`]: encoder, conditional decoder, skip-connection fusion.
//! - [`objective`]: loss terms and the combined objective with analytic gradients.
//! - [`clustering`]: centroid bank, temperature softmax assignment, EMA updates.
//! - [`baselines`]: k-means, linear confound purification, confound-label propagation.
//! - [`metrics`]: ACC, NMI, ARI, balance and confound leakage.
//! - [`harness`]: training loop, baselines orchestration, run persistence, reporting.

pub mod baselines;
pub mod binio;
pub mod clustering;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod networks;
pub mod objective;
pub mod optim;

mod kmeans;

pub use error::{Error, Result};
