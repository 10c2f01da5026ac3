//! Learned joint subsampling and reconstruction for full-matrix-capture
//! ultrasonic imaging.
//!
//! The library builds a frequency-domain linear acquisition model over a
//! pixel grid, learns which transmitters, receivers, and Fourier
//! coefficients to keep — jointly with an unrolled complex FISTA
//! reconstructor — and benchmarks the learned patterns against a bound-
//! based exhaustive search and random selections.
//!
//! Module map:
//! - [`forward_model`]: array geometry, pulse spectrum, matrix assembly,
//!   measurement synthesis.
//! - [`scene_gen`]: random sparse scenes and dataset persistence.
//! - [`subsampling`]: logits, Gumbel top-K draws, Kronecker row masks,
//!   pattern files.
//! - [`recovery`]: complex soft-thresholding, FISTA, and the unrolled
//!   network forward pass.
//! - [`training`]: reverse-mode gradients, the straight-through selection
//!   estimator, Adam, and the joint training loop.
//! - [`crb_baseline`]: variance-bound criterion and exhaustive subset
//!   search.
//! - [`harness`]: evaluation metrics, experiment orchestration, reports.
//! - Support: [`linalg`], [`operator`], [`config`], [`container`],
//!   [`error`].

pub mod config;
pub mod container;
pub mod crb_baseline;
pub mod error;
pub mod forward_model;
pub mod harness;
pub mod linalg;
pub mod operator;
pub mod recovery;
pub mod scene_gen;
pub mod subsampling;
pub mod training;

pub use error::{Error, Result};
