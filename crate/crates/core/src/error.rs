use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("degenerate merge: merged zeroth moment {0} is not positive")]
    DegenerateMerge(f64),

    #[error("need at least 2 active gaussians, found {0}")]
    InsufficientPopulation(usize),

    #[error("invalid target count {target} for a set of {n}")]
    InvalidTarget { target: usize, n: usize },

    #[error("inconsistent merge sequence: {0}")]
    InconsistentSequence(String),

    #[error("merge sequence is not fully simplified: {records} records for {source_count} gaussians")]
    NotFullySimplified { records: usize, source_count: usize },

    #[error("token list does not match tree: {0}")]
    TokenTreeMismatch(String),

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),

    #[error("image too small for ssim: {0}x{1}, need at least 11 on each side")]
    ImageTooSmall(usize, usize),

    #[error("bad magic: expected `{}`, found `{}`", magic_text(expected), magic_text(found))]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (reader supports {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("missing ply property `{0}`")]
    MissingProperty(String),

    #[error("unsupported ply variant: {0}")]
    UnsupportedVariant(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Broad category used by front ends to choose exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NumericalDegeneracy(_) | Error::DegenerateMerge(_) => ErrorKind::Numerical,
            Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated(_)
            | Error::Format(_)
            | Error::MissingProperty(_)
            | Error::UnsupportedVariant(_) => ErrorKind::Format,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Usage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Format,
    Numerical,
    Io,
}

fn magic_text(m: &[u8; 4]) -> String {
    m.iter().flat_map(|b| std::ascii::escape_default(*b)).map(char::from).collect()
}
