use thiserror::Error;

/// Failure modes of the library, grouped by what the caller can do about
/// them. `Domain` means a parameter left its mathematical domain, `Size`
/// means a grid or level bound was violated, `Format` covers malformed or
/// wrongly shaped input data, and `Numerical` flags internal computations
/// that failed a correctness check and must not be silently patched over.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        // keep io errors (missing file, broken pipe) in the io bucket
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!("is_io_error guarantees an io kind"),
            }
        } else {
            Error::Format(format!("csv: {e}"))
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(format!("json: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
