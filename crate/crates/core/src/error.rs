use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix structure invalid: {0}")]
    InvalidStructure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A constraint or metric operator failed a positive-definiteness check.
    #[error("metric/constraint not SPD: {0}")]
    NotSpd(String),

    #[error("degenerate step: B-norm {0:e} below guard")]
    DegenerateStep(f64),

    #[error("point is off the manifold: |x'Bx - 1| = {0:e}")]
    OffManifold(f64),

    /// The stacked sketch factor lost rank. Rebuilding with a fresh seed, a larger
    /// sketch, or a positive ridge usually fixes this.
    #[error("singular preconditioner: {0}")]
    SingularPreconditioner(String),

    #[error("eigengap {0:e} too small for a condition bound")]
    DegenerateGap(f64),

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input has no rows")]
    NoRows,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }

    /// True for failures rooted in the input data rather than in the numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::NoRows
                | Error::EmptyClass(_)
                | Error::LabelOutOfRange { .. }
                | Error::InvalidStructure(_)
                | Error::Io(_)
        )
    }
}

pub(crate) fn ensure_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dims(context, expected, found))
    }
}
