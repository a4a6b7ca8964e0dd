use marc_envs::EnvError;
use marc_gnn::GnnError;
use marc_relgraph::GraphError;
use marc_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("agent {agent}: expected {expected} one-hot action vectors of other agents, got {got}")]
    Arity { agent: usize, got: usize, expected: usize },
    #[error("non-finite {what}: {detail}")]
    NonFinite { what: &'static str, detail: String },
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("checkpoint mismatch in {field}: {detail}")]
    Checkpoint { field: String, detail: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
