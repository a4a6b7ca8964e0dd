use std::fmt::Write as _;

use crate::entity::Entity;
use crate::error::{GraphError, Result};
use crate::relation::RelationSet;

/// Entity-feature matrix Z with one column per entity (d × |V|).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn get(&self, feature: usize, entity: usize) -> f64 {
        self.data[feature * self.cols + entity]
    }

    pub fn column(&self, entity: usize) -> Vec<f64> {
        (0..self.rows).map(|f| self.get(f, entity)).collect()
    }
}

/// Entities plus one directed edge list per relation, in relation-set order.
#[derive(Debug, Clone)]
pub struct RelationalGraph {
    pub entities: Vec<Entity>,
    pub relation_names: Vec<String>,
    /// `edges[r]` holds `(source, target)` pairs with `r(source, target)` true.
    pub edges: Vec<Vec<(usize, usize)>>,
    pub features: FeatureMatrix,
}

impl RelationalGraph {
    pub fn node_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// One `relation source target` line per edge.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (name, edges) in self.relation_names.iter().zip(&self.edges) {
            for (s, t) in edges {
                let _ = writeln!(out, "{name} {} {}", self.entities[*s].id, self.entities[*t].id);
            }
        }
        out
    }
}

/// Connects every ordered pair of distinct entities under every relation
/// whose predicate holds for their positions.
pub fn build_graph(entities: Vec<Entity>, relations: &RelationSet) -> Result<RelationalGraph> {
    let first = entities.first().ok_or(GraphError::NoEntities)?;
    let d = first.features.len();
    if let Some(bad) = entities.iter().find(|e| e.features.len() != d) {
        return Err(GraphError::FeatureWidth {
            id: bad.id,
            got: bad.features.len(),
            expected: d,
        });
    }
    let n = entities.len();
    let mut edges = vec![Vec::new(); relations.len()];
    for (r, rel) in relations.iter().enumerate() {
        for u in 0..n {
            for v in 0..n {
                if u != v && rel.holds(&entities[u].site, &entities[v].site) {
                    edges[r].push((u, v));
                }
            }
        }
    }
    let mut data = vec![0.0; d * n];
    for (j, e) in entities.iter().enumerate() {
        for (f, &value) in e.features.iter().enumerate() {
            data[f * n + j] = value;
        }
    }
    Ok(RelationalGraph {
        relation_names: relations.names().into_iter().map(String::from).collect(),
        edges,
        features: FeatureMatrix {
            rows: d,
            cols: n,
            data,
        },
        entities,
    })
}
