use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("negative edge weight {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("value {value} at ({row}, {col}) outside [-1, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("community {0} is empty")]
    EmptyCommunity(usize),
    #[error("no community assignment for instance {0}")]
    MissingAssignment(usize),
    #[error("non-finite {0} loss")]
    NonFiniteLoss(&'static str),
    #[error("only one class present in {0}")]
    SingleClass(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
