use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{operation} does not support the {variant} variant")]
    UnsupportedVariant {
        operation: &'static str,
        variant: &'static str,
    },

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("divergent moment: {moment} is infinite for {detail}")]
    DivergentMoment { moment: &'static str, detail: String },

    #[error("{what} did not converge after {terms_used} terms")]
    NonConvergence { what: &'static str, terms_used: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("probability leak {leak:.3e} exceeds tolerance {tolerance:.1e}; increase x_max to at least {required_x_max}")]
    Truncation {
        leak: f64,
        tolerance: f64,
        required_x_max: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("no signal: {0}")]
    NoSignal(String),

    #[error("normal equations are rank deficient: {0}")]
    RankDeficient(String),

    #[error("r-squared is undefined for a series with zero variance")]
    UndefinedRSquared,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_schema(&self) -> bool {
        matches!(self.root(), Error::Schema(_))
    }

    pub fn is_non_convergence(&self) -> bool {
        matches!(self.root(), Error::NonConvergence { .. })
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
