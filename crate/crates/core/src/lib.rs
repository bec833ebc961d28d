//! Building blocks for self-supervised learning on pathology tiles.
//!
//! The crate is split by concern:
//!
//! - [`tiling`]: HSV tissue filter and non-overlapping tile extraction from slide images.
//! - [`augment`]: crop-and-resize and extended-context translation (ECT) view sampling,
//!   bilinear view materialization, and Monte Carlo overlap calibration.
//! - [`regularizers`]: KoLeo and kernel-density entropy estimators on the hypersphere,
//!   with analytic gradients.
//! - [`posenc`]: cell-sample-distance sinusoidal encodings and learned per-magnification tables.
//! - [`probe`]: linear probe over frozen embeddings (softmax regression, SGD, cosine schedule).
//!
//! Every stochastic routine takes an explicit `u64` seed and is reproducible bit-for-bit,
//! independent of the rayon thread count.

pub mod augment;
pub mod error;
pub mod posenc;
pub mod probe;
pub mod regularizers;
pub mod tiling;

mod seed;

pub use error::{Error, Result};
