use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("{env}: observation of length {len} is not a whole number of {block}-wide entity blocks")]
    Width { env: String, len: usize, block: usize },
    #[error("unknown relation preset '{name}' (valid: {valid})")]
    UnknownPreset { name: String, valid: String },
    #[error("unknown relation '{0}'")]
    UnknownRelation(String),
    #[error("relation '{0}' appears twice")]
    DuplicateRelation(String),
    #[error("{0}: full-grid entities need a grid environment")]
    NotGrid(String),
    #[error("entity at ({x}, {y}) is outside the {width}x{height} grid")]
    OffGrid { x: f64, y: f64, width: usize, height: usize },
    #[error("a graph needs at least one entity")]
    NoEntities,
    #[error("entity {id} has {got} features, expected {expected}")]
    FeatureWidth { id: usize, got: usize, expected: usize },
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;
