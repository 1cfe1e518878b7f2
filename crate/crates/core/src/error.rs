use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A state, parameter or argument lies outside the admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Every propensity vanished, so the jump chain cannot leave the state.
    #[error("absorbing state reached at {0:?}")]
    Absorbing(Vec<i64>),

    #[error("invalid network definition: {0}")]
    Network(String),

    /// A neighborhood contained no lattice point other than its center.
    #[error("node {node} has an empty neighborhood; increase the ellipse scale")]
    IsolatedNode { node: usize },

    /// The similarity graph or a generator split into several components.
    #[error("graph is disconnected into {} components (sizes {sizes:?})", sizes.len())]
    Disconnected { sizes: Vec<usize> },

    #[error("eigensolver did not converge after {iters} iterations (last residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("birth-death chain decomposes: zero down-rate at bin {bin}")]
    DecomposedChain { bin: usize },

    #[error("non-adjacent transition from bin {from} to bin {to} with rate {rate:e}")]
    NonAdjacent { from: usize, to: usize, rate: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A pipeline stage needs an artifact that an earlier stage produces.
    #[error("missing artifact {path}; run stage `{stage}` first")]
    MissingArtifact { path: String, stage: String },

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Network(_) => 2,
            Error::MissingArtifact { .. } => 4,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}
