use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid complex structure{}: {reason}", site_suffix(*.site))]
    InvalidStructure { site: Option<usize>, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("assembly invariant violated: {0}")]
    Assembly(String),

    #[error("eigensolver did not converge after {restarts} restarts (best residual {best_residual:.3e})")]
    Convergence { restarts: usize, best_residual: f64 },

    #[error("solve failed at s = {s}: {source}")]
    AtParameter {
        s: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("ill-posed counting window: edge {edge} lies within {tolerance:e} of eigenvalue {eigenvalue}")]
    IllPosedWindow {
        edge: f64,
        eigenvalue: f64,
        tolerance: f64,
    },

    #[error("insufficient spectrum: {0}")]
    InsufficientSpectrum(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain truncation: {0}")]
    Truncation(String),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn site_suffix(site: Option<usize>) -> String {
    match site {
        Some(s) => format!(" at site {s}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
