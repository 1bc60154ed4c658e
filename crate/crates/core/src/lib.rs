//! Desk-scale laboratory for entropy at a scale on matrix Lie groups.
//!
//! Finitely supported measures are convolved exactly, smoothed by truncated
//! Gaussian kernels pushed through the exponential map, and probed with
//! Monte-Carlo resubstitution estimators of differential entropy, conditional
//! entropy and conditional trace. On top of these sit the scale-selection
//! pipeline and the stopped random walk harness.

pub mod conditioning;
pub mod entropy;
pub mod error;
pub mod knn;
pub mod lie;
pub mod measure;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod scales;
pub mod smoothing;
pub mod verify;
pub mod walks;

pub use entropy::EntropyEstimate;
pub use error::{Error, Result};
pub use measure::FinSuppMeasure;
pub use lie::{AlgebraVector, Distance, GroupElement, LieGroupModel};
pub use rng::RngStream;
pub use smoothing::SmoothingKernel;
