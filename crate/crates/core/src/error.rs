use thiserror::Error;

/// Errors raised by grid construction, weight evaluation and operator
/// application. Check failures are not errors: they land in report types
/// (`ResidualRecord`, `WeightValidationReport`, ...) with `passed = false`.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("grid half-width must be positive and finite, got {0}")]
    InvalidHalfWidth(f64),

    #[error("grid node count must be odd and >= 3, got {0}")]
    InvalidNodeCount(usize),

    #[error("wavefunctions live on different grids")]
    GridMismatch,

    #[error("unknown weight '{0}'")]
    UnknownWeight(String),

    #[error("unknown test function '{0}'")]
    UnknownTestFunction(String),

    #[error("invalid parameter: {0}")]
    BadParameter(String),

    #[error("weight is non-positive ({value}) at E = {energy}")]
    NonPositiveWeight { energy: f64, value: f64 },

    #[error("non-finite value ({what}) at E = {energy}")]
    NonFinite { energy: f64, what: &'static str },

    #[error("wavefunction contains non-finite samples")]
    NonFiniteSamples,

    #[error("self inner product is not a norm: {0}")]
    BrokenNorm(String),

    #[error("bump radius {radius} leaves no decay margin on grid of half-width {half_width}")]
    BumpRadiusTooLarge { radius: f64, half_width: f64 },

    #[error("decay margin violated: |w^(1/2) psi| = {worst} at the grid edge exceeds {limit}")]
    DecayMargin { worst: f64, limit: f64 },

    #[error("shift margin violated: {0}")]
    MarginViolation(String),

    #[error("shift {sigma} is not an integer multiple of the grid spacing {spacing} and interpolation is disabled")]
    UnalignedShift { sigma: f64, spacing: f64 },

    #[error("matrix dimension {n} exceeds the dense cap {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("operator matrix metric has a zero entry at index {0}")]
    ZeroMetricEntry(usize),

    #[error("csv parse error: {0}")]
    CsvFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
