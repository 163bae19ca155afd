use thiserror::Error;

/// Errors raised across the equilibrium pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation error at {location}: {message}")]
    Evaluation { location: String, message: String },

    #[error("splitter failed at t={t}, c={c}: {message}")]
    Splitter { t: f64, c: f64, message: String },

    #[error("primitive error on path {path}, time index {time_index}: {message}")]
    Primitive {
        path: usize,
        time_index: usize,
        message: String,
    },

    #[error(
        "weight solver did not converge after {iterations} iterations (best residual {residual:e})"
    )]
    NonConvergence {
        iterations: usize,
        best: Vec<f64>,
        residual: f64,
        residual_trace: Vec<f64>,
    },

    #[error("weight iterate collapsed to the simplex boundary: {weights:?}")]
    Boundary { weights: Vec<f64> },

    #[error("PDE solver error: {0}")]
    Solver(String),

    #[error("dispersion matrix rank-deficient at t={t}, x={x:?}: {message}")]
    Completeness {
        t: f64,
        x: Vec<f64>,
        message: String,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn eval(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Evaluation {
            location: location.into(),
            message: message.into(),
        }
    }
}
