//! Deterministic multi-cell radio network laboratory.
//!
//! - [`network`]: hex-grid layout, propagation, SINR and per-cell KPIs.
//! - [`neural`]: dense networks with analytic gradients, Adam, quantizer.
//! - [`tilt`]: offline antenna-tilt learning from logged rule-based data.
//! - [`beam`]: two-cell MISO beamforming with a centralized critic.
//! - [`csi`]: quantized autoencoder CSI feedback compression.

pub mod beam;
pub mod csi;
pub mod network;
pub mod neural;
pub mod rng;
pub mod tilt;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
