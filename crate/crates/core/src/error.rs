use std::path::PathBuf;

/// Errors produced anywhere in the learning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "covariance matrix of {n} points is not positive definite even with jitter {max_jitter:e} \
         (smallest diagonal {min_diag:e}, noise variance {noise_var:e})"
    )]
    Factorization {
        n: usize,
        max_jitter: f64,
        min_diag: f64,
        noise_var: f64,
    },

    #[error("dynamic relaxation did not settle within {steps} steps (kinetic energy {kinetic_energy:e} J)")]
    Relaxation { steps: usize, kinetic_energy: f64 },

    #[error("simulation became non-finite at t = {time:.4} s")]
    Unstable { time: f64 },

    #[error("cannot measure yaw: ground projection of the nodes is degenerate")]
    DegenerateYaw,

    #[error("empty data")]
    EmptyData,

    #[error("evaluation of policy [{:.4}, {:.4}, {:.4}] failed: {source}", chi[0], chi[1], chi[2])]
    Evaluation {
        chi: [f64; 3],
        #[source]
        source: Box<Error>,
    },

    #[error("evaluator failed at trial {trial}: {message}")]
    Evaluator { trial: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv {path}, line {line}: {reason}")]
    Csv { path: PathBuf, line: usize, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
