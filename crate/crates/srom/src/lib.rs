//! Data-driven reduced-order modeling of 2-D flow snapshot archives.
//!
//! The pipeline has four stages:
//!
//! 1. **spod** — Welch-blocked spectral proper orthogonal decomposition of the
//!    velocity fluctuations, yielding per-frequency modes and energies.
//! 2. **projection / pruning** — time-domain expansion coefficients by
//!    weighted oblique projection, with the mode space reduced by an energy
//!    criterion and a spatial-similarity criterion.
//! 3. **autoencoder / forecaster** — nonlinear compression of the retained
//!    coefficients into a latent series and autoregressive LSTM forecasting of
//!    that series.
//! 4. **scalar-map** — a fully-convolutional mapping from instantaneous
//!    velocity fields to the non-negative scalar concentration field.
//!
//! Everything is deterministic given the run seed; see the `examples/`
//! directory for one runnable walkthrough per stage and the `srom` binary for
//! the file-based workflow.

pub mod autoencoder;
pub mod dataset;
pub mod error;
pub mod nn;
pub mod projection;
pub mod pruning;
pub mod spod;

pub use error::{Error, Result};

/// Derive a child RNG seed from a base seed and a purpose label, so parallel
/// components get decorrelated but reproducible streams.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is long enough"))
}
