use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad input data. `lines` holds 1-based file line numbers when the data
    /// came from a file (the header is line 1).
    #[error("data error: {message}{}", fmt_lines(.lines))]
    Data { message: String, lines: Vec<usize> },

    #[error("Newton iteration did not converge after {iterations} iterations{}", fmt_batch(.batch))]
    Convergence {
        iterations: usize,
        batch: Option<usize>,
        last_iterate: Vec<f64>,
    },

    #[error("numeric error: {message}{}", fmt_batch(.batch))]
    Numeric {
        message: String,
        batch: Option<usize>,
    },

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("smoothing selection failed: {0}")]
    Selection(String),

    #[error("snapshot format version {found} is not supported (expected {expected}); re-fit or upgrade the snapshot")]
    Version { found: u32, expected: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_lines(lines: &[usize]) -> String {
    if lines.is_empty() {
        return String::new();
    }
    let shown: Vec<String> = lines.iter().take(20).map(|l| l.to_string()).collect();
    let more = if lines.len() > 20 {
        format!(" (+{} more)", lines.len() - 20)
    } else {
        String::new()
    };
    format!(" (line {}{})", shown.join(", "), more)
}

fn fmt_batch(batch: &Option<usize>) -> String {
    match batch {
        Some(b) => format!(" at batch {b}"),
        None => String::new(),
    }
}

impl Error {
    pub fn data(message: impl Into<String>) -> Self {
        Error::Data {
            message: message.into(),
            lines: Vec::new(),
        }
    }

    pub(crate) fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric {
            message: message.into(),
            batch: None,
        }
    }

    /// Attaches a batch index to filter errors raised inside a recursion.
    pub fn at_batch(self, index: usize) -> Self {
        match self {
            Error::Convergence {
                iterations,
                last_iterate,
                ..
            } => Error::Convergence {
                iterations,
                batch: Some(index),
                last_iterate,
            },
            Error::Numeric { message, .. } => Error::Numeric {
                message,
                batch: Some(index),
            },
            other => other,
        }
    }

    /// Short stable identifier, used by the CLI for machine-readable output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data { .. } => "data",
            Error::Convergence { .. } => "convergence",
            Error::Numeric { .. } => "numeric",
            Error::Sequencing(_) => "sequencing",
            Error::Argument(_) => "argument",
            Error::Metric(_) => "metric",
            Error::Selection(_) => "selection",
            Error::Version { .. } => "version",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
