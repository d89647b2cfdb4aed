use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// The file is not in the expected container format (bad magic, unknown version).
    #[error("format error: {0}")]
    Format(String),

    /// The file claims a layout its payload does not have.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("montage error: {0}")]
    Montage(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("version mismatch: expected {expected}, found {found}")]
    Version { expected: u32, found: u32 },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(msg()))
    }
}
