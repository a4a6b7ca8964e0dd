//! Relational abstraction of an observation: entities with non-spatial
//! features, and typed directed edges from spatial predicates over their
//! positions.

mod entity;
mod error;
mod graph;
mod relation;

pub use entity::{extract_entities, grid_as_entities, Domain, Entity, ObservationSchema, Point, Site};
pub use error::{GraphError, Result};
pub use graph::{build_graph, FeatureMatrix, RelationalGraph};
pub use relation::{
    continuous_relation, eval_relation, grid_relation, preset_is_continuous, preset_names, relation_preset,
    AdjacencyRule, AlignedRule, RelationOptions, RelationSet, SpatialRelation, GRID_RELATIONS,
};
