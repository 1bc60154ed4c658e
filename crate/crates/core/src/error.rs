use thiserror::Error;

use crate::lie::LieGroupModel;

/// Errors raised by the laboratory operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("model mismatch: {left} vs {right}")]
    ModelMismatch {
        left: LieGroupModel,
        right: LieGroupModel,
    },

    #[error("outside the log chart of {model}: {detail}")]
    OutsideChart { model: LieGroupModel, detail: String },

    #[error("invalid group element for {model}: {detail}")]
    InvalidElement { model: LieGroupModel, detail: String },

    #[error("support overflow: {count} atoms exceeds the cap of {cap}")]
    SupportOverflow { count: usize, cap: usize },

    #[error("stopping time exceeded the step cap of {cap}")]
    CapExceeded { cap: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("zero density at a sampled point ({0}); the chart machinery is inconsistent")]
    DegenerateDensity(String),

    #[error("observation has zero density under every atom")]
    ZeroDensityObservation,

    #[error("witness constraint violated: |log(h^-1 g)| = {norm} > radius {radius}")]
    WitnessViolation { norm: f64, radius: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("scale range too narrow: r_hi / r_lo = {ratio} must exceed A^2 = {required}")]
    RangeTooNarrow { ratio: f64, required: f64 },

    #[error("entropy-gap hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for the errors that signal an exhausted resource cap.
    pub fn is_resource_cap(&self) -> bool {
        matches!(self, Error::SupportOverflow { .. } | Error::CapExceeded { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
