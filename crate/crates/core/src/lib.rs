//! Compressive-learning classification toolkit.
//!
//! Grayscale images are projected through seeded sensing matrices
//! (Gaussian, circulant, Toeplitz), the compressed projections are stacked
//! as channels, and a small convolutional network is trained directly on
//! the compressed features — no reconstruction step. A sparse-recovery
//! module ([`reconstruct`]) validates the underlying measurement model on
//! synthetic signals, and [`eval`] provides stratified splitting, k-fold
//! cross-validation and experiment grids with reproducible artifacts.

pub mod data;
pub mod error;
pub mod eval;
mod fastconv;
pub mod features;
pub mod nn;
pub mod reconstruct;
pub mod rng;
pub mod sensing;
pub mod util;

pub use error::{Error, Result};
pub use sensing::{
    build_matrix, compress_image, compression_ratio, mutual_coherence, MatrixKind,
    Measurement, SensingMatrix, SensingMatrixSpec,
};
