use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("QR iteration did not converge after {iterations} iterations (active block ending at row {row})")]
    SchurNoConvergence { iterations: usize, row: usize },
    #[error("Schur block swap at position {position} failed: {reason}")]
    SwapFailed { position: usize, reason: String },
    #[error("2x2 block at rows {row}..{} violates orientation precondition: {reason}", row + 2)]
    Orientation { row: usize, reason: String },
    #[error("matrix is (nearly) defective: eigenvalue gap {gap:e} below threshold {threshold:e}")]
    Defective { gap: f64, threshold: f64 },
    #[error("singular matrix: pivot {pivot:e} at step {step}")]
    Singular { step: usize, pivot: f64 },
    #[error("Legendre root iteration did not converge for s = {stages}")]
    LegendreNoConvergence { stages: usize },
    #[error("optimizer did not converge (best objective {best_value:e})")]
    OptimizerNoConvergence { best_value: f64, best_point: Vec<f64> },
    #[error("zero pivot in row {row} during {kind} factorization")]
    ZeroPivot { row: usize, kind: &'static str },
    #[error("factorization of block {block} failed: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
