use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    /// Local constitutive evaluation failed (overflow guard, JA inversion).
    #[error("material error: {message} (residual {residual:e})")]
    Material { message: String, residual: f64 },

    #[error("solver error: {message}")]
    Solver {
        message: String,
        /// Dof carrying the largest (or first non-finite) solution entry.
        null_dof: Option<usize>,
    },

    #[error("cell problem at gauss point {gauss_point} did not converge: residuals {residuals:?}")]
    Cell {
        gauss_point: usize,
        residuals: Vec<f64>,
    },

    #[error("time step {step} (t = {t:e} s) failed: {message}")]
    Step { step: usize, t: f64, message: String },

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("probe error: {0}")]
    Probe(String),

    /// Relative error requested against an identically zero reference.
    #[error("undefined relative error: reference norm is zero")]
    UndefinedError,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(line: impl Into<Option<usize>>, message: impl Into<String>) -> Self {
        Error::Config {
            line: line.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Geometry(_) => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
