//! Bit-accurate simulation of Multi-Scale Dequant (MSD) activation
//! decomposition.
//!
//! A high-precision activation `x` is split into low-precision components
//! `x ≈ α·x⁽¹⁾ + β·x⁽²⁾` so that the GEMM against a quantized weight runs
//! natively in the weight's format instead of lifting the weight to BF16.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: BF16 truncation, rounding, exact scale helpers.
//! - [`msd_int8`]: two-pass and K-pass INT8 decomposition.
//! - [`mx_formats`]: FP4 E1M2 / E4M3 / E8M0 codecs, the MXFP4 two-pass
//!   decomposition and the single-pass MXFP8 baseline.
//! - [`datagen`]: seeded activations, INT8 weights and KV caches.
//! - [`gemm_sim`] and [`attention_sim`]: the simulated pipelines.
//! - [`metrics`]: L2 relative error, exceedance fractions, effective bits.
//! - [`cost_model`]: closed-form Vector-op, HBM-traffic and latency models.

pub mod attention_sim;
pub mod cost_model;
pub mod datagen;
pub mod error;
pub mod gemm_sim;
pub mod matrix;
pub mod metrics;
pub mod msd_int8;
pub mod mx_formats;
pub mod numerics;

pub use error::{MsdError, Result};
pub use matrix::{Matrix, QuantizedWeight, ScaleAxis, SimMatrix};
