use thiserror::Error;

/// Errors produced by the hmat pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("resource limit exceeded: {what} needs {requested}, limit is {limit}")]
    ResourceExhausted {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature produced a non-finite value for elements ({0}, {1})")]
    QuadratureFailure(usize, usize),

    #[error("block rows {row_lo}..{row_hi} x cols {col_lo}..{col_hi}: {source}")]
    Block {
        row_lo: usize,
        row_hi: usize,
        col_lo: usize,
        col_hi: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("worker {worker}: {source}")]
    Worker {
        worker: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("CG breakdown at iteration {iter}: p^T A p = {curvature:e} is not positive")]
    Breakdown { iter: usize, curvature: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
