use std::path::PathBuf;

/// Errors surfaced by every module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input file (bad header, ragged CSV rows, duplicate ids, ...).
    #[error("format error: {0}")]
    Format(String),

    /// The file parsed but uses an encoding we do not handle.
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),

    /// An operation precondition was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Inconsistent or unusable configuration (plan files, STFT windows, transform tables).
    #[error("configuration error: {0}")]
    Config(String),

    /// A sampling request exceeds what the dataset can supply.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// An external converter failed or produced unusable output.
    #[error("backend error: {0}")]
    Backend(String),

    /// A prediction file is missing ids required by the manifest under evaluation.
    #[error("incomplete predictions: {} id(s) missing, first few: {}", .missing.len(), first_ids(.missing))]
    IncompletePredictions { missing: Vec<String> },

    /// One or more per-file failures during a dataset build.
    #[error("{} file(s) failed during build, first: {}", .failures.len(), first_failures(.failures))]
    Build { failures: Vec<FileFailure> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A single per-file failure recorded during a `--keep-going` style run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FileFailure {
    pub sample_id: String,
    pub path: String,
    pub message: String,
}

fn first_ids(missing: &[String]) -> String {
    missing
        .iter()
        .take(5)
        .cloned()
        .collect::<Vec<_>>()
        .join(", ")
}

fn first_failures(failures: &[FileFailure]) -> String {
    failures
        .first()
        .map(|f| format!("{} ({}): {}", f.sample_id, f.path, f.message))
        .unwrap_or_default()
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
