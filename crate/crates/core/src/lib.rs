//! Multiscale discrete kernel convolution (MDCT) spatial regression.
//!
//! The spatial surface is a sum of per-resolution expansions in compactly
//! supported Wendland bumps centered at the knots of a recursive domain
//! partition. Basis coefficients carry a tree shrinkage prior whose variances
//! are products of inverse-Gamma factors along the partition tree, so finer
//! resolutions are shrunk harder a priori.
//!
//! Crate layout:
//!
//! - [`grid`]: domain partition, knots, tree navigation, neighborhoods.
//! - [`kernel`]: Wendland kernel and the row-sparse multiresolution design.
//! - [`shrinkage`]: tree shrinkage prior state and its Gamma updates.
//! - [`sampler`]: blocked Gibbs sampler (sequential, chromatic, Jacobi).
//! - [`predict`]: composition-sampling prediction and evaluation metrics.
//! - [`probit`]: latent-variable probit extension.
//! - [`simdata`]: synthetic 1D / 2D / binary experiment generators.
//! - [`io`]: CSV ingestion and output.

pub mod error;
pub mod grid;
pub mod io;
pub mod kernel;
pub(crate) mod linalg;
pub(crate) mod streams;
pub mod predict;
pub mod probit;
pub mod sampler;
pub mod shrinkage;
pub mod simdata;

pub use error::{Error, Result};
pub use grid::{DomainBox, MultiresGrid, TreeIndex};
pub use kernel::{KernelConfig, SparseDesign};
pub use sampler::{ChainConfig, ChainSamples, Dataset, Hyperparams, ModelState, SamplerMode};
pub use shrinkage::ShrinkageState;

/// A spatial location. One-dimensional locations keep the second component at 0.
pub type Coord = [f64; 2];

/// Euclidean distance between two locations.
#[inline]
pub fn dist(a: &Coord, b: &Coord) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}
