use std::path::PathBuf;

/// Errors raised by the reduction, simulation and ingestion routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("shift {re:.6e}{im:+.6e}i collides with spectrum")]
    ShiftCollision { re: f64, im: f64 },

    #[error("saddle matrix singular at shift {re:.6e}{im:+.6e}i")]
    SingularSaddle { re: f64, im: f64 },

    #[error("{what}: residual {residual:.3e} exceeds {tol:.1e}")]
    Residual {
        what: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("unstable: {0}")]
    Unstable(String),

    #[error("projector rank defect: expected rank {expected}, found {found}")]
    RankDefect { expected: usize, found: usize },

    #[error("Newton iteration failed at step {step} (update norm {update:.3e})")]
    Newton { step: usize, update: f64 },

    #[error("fixed point diverged after {iterations} iterations")]
    Diverged { iterations: usize },

    #[error("Gramian inconsistency: trace(CPC^T) = {primal:.12e}, trace(B^TQB) = {dual:.12e}")]
    GramianInconsistency { primal: f64, dual: f64 },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_column(self, column: usize) -> Self {
        Error::Column {
            column,
            source: Box::new(self),
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
