use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: left is {left:?}, right is {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("backward requires a 1x1 loss, got {0:?}")]
    NotScalar((usize, usize)),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
