//! Dirac operators on flat spin tori, Euclidean Dirac Green's kernels, exact
//! radial Dirac calculus and eigenspinor zero-set experiments in dimensions
//! 2 and 3.

pub mod clifford;
pub mod error;
pub mod fieldio;
pub mod green;
pub mod perturb;
pub mod radial;
pub mod special;
pub mod spectral;
pub mod torus;
pub mod zeroset;

pub use error::{Error, Result};

/// Master seed of the shipped deterministic experiments.
pub const DEFAULT_SEED: u64 = 0x5eed_2026;
