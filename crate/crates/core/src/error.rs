use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad parameters or configuration (cost spec, hyperparameters, config files).
    #[error("configuration error: {0}")]
    Config(String),

    /// Arguments that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// CSV / schema ingestion failure. `row` is 1-based and counts the header.
    #[error("ingestion error at row {row}: {message}")]
    Ingestion { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("singular design matrix; offending columns: {}", .columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("solver did not converge after {iterations} iterations (best objective {best_objective})")]
    Convergence {
        iterations: usize,
        best_objective: f64,
    },

    #[error("training diverged: {0}")]
    Training(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of a numerical routine rather than of its inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign { .. } | Error::Convergence { .. } | Error::Training(_)
        )
    }
}
