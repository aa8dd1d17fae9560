use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("ill-conditioned matrix (condition estimate {condition:.3e} exceeds {limit:.1e})")]
    Conditioning { condition: f64, limit: f64 },

    #[error("form degree overflow: ({lhs},{lhs}) ∧ ({rhs},{rhs}) exceeds dimension {dim}")]
    DegreeOverflow { lhs: usize, rhs: usize, dim: usize },

    #[error("rejected input: {0}")]
    Rejected(String),

    #[error("Gram matrix not positive definite at pivot {pivot} (pivot value {value:.3e}); increase quadrature resolution")]
    GramNotPositive { pivot: usize, value: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("unsupported regime: {requested}; supported: {supported}")]
    Unsupported { requested: String, supported: String },

    #[error("non-finite value encountered while evaluating {0}")]
    Evaluation(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
