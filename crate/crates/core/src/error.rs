use thiserror::Error;

/// Everything that can go wrong while building meshes, spaces or running the
/// right-inverse and inf-sup machinery.
#[derive(Debug, Error)]
pub enum SvError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("non-conforming mesh: {0}")]
    NonConforming(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-manifold vertex patch at vertex {vertex}: {message}")]
    NonManifold { vertex: usize, message: String },

    #[error("pressure is not admissible: {0}")]
    NotAdmissible(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("polynomial degree {degree} exceeds the supported maximum {max}")]
    DegreeTooHigh { degree: usize, max: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SvError {
    /// Failures caused by bad user input, as opposed to violated internal invariants.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SvError::Parse { .. }
                | SvError::NonConforming(_)
                | SvError::InvalidArgument(_)
                | SvError::Domain(_)
                | SvError::NonManifold { .. }
                | SvError::NotAdmissible(_)
                | SvError::Degenerate(_)
                | SvError::DegreeTooHigh { .. }
                | SvError::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SvError>;
