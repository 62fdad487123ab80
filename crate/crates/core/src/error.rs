use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid white point: {0}")]
    InvalidWhitePoint(String),
    #[error("degenerate color: {0}")]
    DegenerateColor(String),
    #[error("invalid reference white: {0}")]
    InvalidReferenceWhite(String),
    #[error("gray anchor patch has non-positive luminance ({0})")]
    DegenerateAnchor(String),
    #[error("degenerate patch {index}: zero-norm vector")]
    DegeneratePatch { index: usize },
    #[error("interpolated CST maps the neutral to a non-positive XYZ sum ({sum})")]
    DegenerateMapping { sum: f64 },
    #[error("white patch has zero green response")]
    DegenerateWhite,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot encode white point: {0}")]
    Encoding(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("training diverged at iteration {iteration}: {reason}")]
    TrainingDivergence { iteration: usize, reason: String },
    #[error("oracle fit did not converge (final loss {residual:.3e})")]
    FitFailure { residual: f64 },
    #[error("patch {patch}: {reason}")]
    Extraction { patch: usize, reason: String },
    #[error("spectral grid mismatch: {0}")]
    SpectralGrid(String),
    #[error("capture synthesis: {0}")]
    Synthesis(String),
    #[error("dataset split: {0}")]
    Split(String),
    #[error("blending: {0}")]
    Blending(String),
    #[error("provider cannot serve this request: {0}")]
    Provider(String),
    #[error("reports are not comparable: {0}")]
    Comparison(String),
    #[error("illuminant {id}: {source}")]
    Illuminant {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed data in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Process exit codes used by the command-line jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config = 2,
    Data = 3,
    Numeric = 4,
}

impl Error {
    pub fn for_illuminant(self, id: impl Into<String>) -> Self {
        Error::Illuminant {
            id: id.into(),
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn exit_kind(&self) -> ExitKind {
        match self {
            Error::Config(_) | Error::UnsupportedEncoding(_) | Error::Provider(_) => ExitKind::Config,
            Error::TrainingDivergence { .. } | Error::FitFailure { .. } | Error::DegenerateMapping { .. } => {
                ExitKind::Numeric
            }
            Error::Illuminant { source, .. } => source.exit_kind(),
            _ => ExitKind::Data,
        }
    }
}
