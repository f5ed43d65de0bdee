use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quantile level {0} is outside (0, 1)")]
    InvalidLevel(f64),

    #[error("singular design: Gram matrix eigenvalues span [{min_eig:e}, {max_eig:e}]")]
    SingularDesign { min_eig: f64, max_eig: f64 },

    #[error("matrix is not positive definite (eigenvalues span [{min_eig:e}, {max_eig:e}])")]
    NotPositiveDefinite { min_eig: f64, max_eig: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("solver did not converge after {iterations} iterations (best loss {loss})")]
    Convergence {
        iterations: usize,
        loss: f64,
        best: Vec<f64>,
    },

    #[error("degenerate sparsity estimate: zero spacing between residual quantiles")]
    DegenerateSparsity,

    #[error("insufficient data for {what}: need {needed}, have {found}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("degenerate indicator series (all zeros or all ones)")]
    DegenerateIndicator,

    #[error("nothing to test: the design has no regressor besides the intercept")]
    NothingToTest,

    #[error("singular covariance (condition number {condition:e})")]
    SingularCovariance { condition: f64 },

    #[error("zero spacing among the largest order statistics")]
    ZeroSpacing,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("generative calibration failed: {skipped} of {total} replicates skipped ({detail})")]
    CalibrationFailed {
        skipped: usize,
        total: usize,
        detail: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}
