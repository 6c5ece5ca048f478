//! Desk-scale simulation of neural-field reconstruction on resistive-memory
//! crossbars.
//!
//! The crate is organised bottom-up:
//!
//! * [`device`] models 1T1R crossbar cells: write/read noise, converters,
//!   analog vector–matrix products and the variable-current amplification
//!   chain (VCMAC) that merges bit-plane currents.
//! * [`quant`] maps real weights onto cells, either with the greedy
//!   hardware-aware scheme (program, read back, compensate) or with plain
//!   post-training uniform quantization.
//! * [`encoder`] provides coordinate encodings, including the random Gaussian
//!   projection realised by a formed crossbar and a fixed-point CORDIC.
//! * [`field`] holds coordinate MLPs with low-rank layers, training, structured
//!   pruning and deployment onto simulated hardware.
//! * [`render`] implements ray generation, stratified sampling, volumetric
//!   compositing and deformation fields.
//! * [`metrics`] and [`hapo`] cover image quality and hardware-aware
//!   hyperparameter search; [`io`] ties everything into manifest-driven runs.

pub mod device;
pub mod encoder;
pub mod error;
pub mod experiments;
pub mod field;
pub mod hapo;
pub mod image;
pub mod io;
pub mod metrics;
pub mod quant;
pub mod rng;
pub mod render;

pub use error::{Error, Result};
