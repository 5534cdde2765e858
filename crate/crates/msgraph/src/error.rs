use std::io;
use std::path::{Path, PathBuf};

/// Everything a command can fail with, grouped by exit status.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },
    #[error("{0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn config(path: &Path, reason: impl ToString) -> Self {
        Error::Config {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

/// A line-level parse failure before a file path is attached.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

impl LineError {
    pub fn new(line: usize, reason: impl ToString) -> Self {
        Self {
            line,
            reason: reason.to_string(),
        }
    }

    pub fn at(self, path: &Path) -> Error {
        Error::Parse {
            path: path.to_path_buf(),
            line: self.line,
            reason: self.reason,
        }
    }
}

pub fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

impl From<msgraph_core::pipeline::PipelineError> for Error {
    fn from(e: msgraph_core::pipeline::PipelineError) -> Self {
        use msgraph_core::pipeline::PipelineError;
        match e {
            PipelineError::Optimize(_) => Error::Numerical(e.to_string()),
            _ => Error::Data(e.to_string()),
        }
    }
}

impl From<msgraph_core::sim::SimError> for Error {
    fn from(e: msgraph_core::sim::SimError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<msgraph_core::eval::EvalError> for Error {
    fn from(e: msgraph_core::eval::EvalError) -> Self {
        Error::Data(e.to_string())
    }
}
