use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants map onto the CLI exit codes through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("range error: {what} = {value} outside resolvable band [{lo}, {hi}]")]
    Range {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("blow-up at t = {t}: sup-norm {sup:e} exceeds threshold {threshold:e}")]
    BlowUp {
        t: f64,
        sup: f64,
        threshold: f64,
        sup_history: Vec<(f64, f64)>,
        /// Samples recorded before the abort.
        partial: Box<crate::observables::TimeSeries>,
    },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration/usage problems, 3 for numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Range { .. } | Error::Io(_) | Error::Serde(_) => 2,
            Error::Numeric(_) | Error::BlowUp { .. } | Error::Fit(_) | Error::Size(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
