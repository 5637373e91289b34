use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("divergence at iteration {iteration}: {message}")]
    Divergence { iteration: usize, message: String },
    #[error("no convergence after {iterations} iterations (last update {last_update:e})")]
    NoConvergence {
        iterations: usize,
        last_update: f64,
        /// Last iterate of each module when available.
        last_state: Option<Box<(Vec<f64>, Vec<f64>)>>,
    },
    #[error("module failure at node {node}: {source}")]
    Node {
        node: usize,
        xi: Vec<f64>,
        #[source]
        source: Box<Error>,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }

    /// True for errors caused by bad input rather than numerics or I/O.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::Resource(_) | Error::Format(_) => true,
            Error::Stage { source, .. } | Error::Node { source, .. } => source.is_usage(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Stage { source, .. } | Error::Node { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
