use marc_relgraph::GraphError;
use marc_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GnnError {
    #[error("{layer}: input width {got}, expected {expected}")]
    Width {
        layer: String,
        got: usize,
        expected: usize,
    },
    #[error("batch has {got} relations, layer was built for {expected}")]
    Relations { got: usize, expected: usize },
    #[error("unknown graph layer '{name}' (valid: {valid})")]
    UnknownLayer { name: String, valid: String },
    #[error("max-pool over an empty entity set")]
    EmptyGraph,
    #[error("encoder needs at least one graph layer")]
    NoLayers,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = GnnError> = std::result::Result<T, E>;
