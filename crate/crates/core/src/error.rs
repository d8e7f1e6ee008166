use std::path::PathBuf;

/// Every failure the toolkit can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid layer {layer}: adapter has {layers} layers")]
    InvalidLayer { layer: usize, layers: usize },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid sigma {0}: must be positive")]
    InvalidSigma(f64),

    #[error("empty subdomain pool for subdomain {0}")]
    EmptySubdomainPool(usize),

    #[error("missing condition: {0}")]
    MissingCondition(String),

    #[error("insufficient support: {0}")]
    InsufficientSupport(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a pipeline stage name.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 1 usage, 2 data/format, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::InvalidConfig(_)
            | Error::InvalidLayer { .. }
            | Error::InvalidScenario(_)
            | Error::InvalidPrior(_)
            | Error::InvalidSigma(_) => 1,
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
