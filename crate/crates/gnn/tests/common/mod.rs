#![allow(dead_code)]

use marc_relgraph::{Domain, Entity, ObservationSchema, RelationalGraph, Site};
use marc_relgraph::FeatureMatrix;
use marc_tensor::Matrix;
use rand::Rng;

pub const RELATIONS: [&str; 6] = ["adjacent", "aligned", "left", "right", "top", "bottom"];

pub fn relation_names(k: usize) -> Vec<String> {
    RELATIONS[..k].iter().map(|s| s.to_string()).collect()
}

/// Random graph with arbitrary (not predicate-derived) edges, so every
/// in-degree pattern shows up.
pub fn random_graph<R: Rng>(rng: &mut R, nodes: usize, width: usize, relations: usize, p: f64) -> RelationalGraph {
    let entities: Vec<Entity> = (0..nodes)
        .map(|id| Entity {
            id,
            site: Site::cell(rng.gen_range(0..6), rng.gen_range(0..6)),
            features: (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let edges = (0..relations)
        .map(|_| {
            let mut es = Vec::new();
            for u in 0..nodes {
                for v in 0..nodes {
                    if u != v && rng.gen_bool(p) {
                        es.push((u, v));
                    }
                }
            }
            es
        })
        .collect();
    let features = feature_matrix(&entities);
    RelationalGraph {
        relation_names: relation_names(relations),
        edges,
        features,
        entities,
    }
}

pub fn feature_matrix(entities: &[Entity]) -> FeatureMatrix {
    // FeatureMatrix has private storage; rebuild it through build_graph
    let rels = marc_relgraph::RelationSet::new(Vec::new()).unwrap();
    marc_relgraph::build_graph(entities.to_vec(), &rels).unwrap().features
}

pub fn domain() -> Domain {
    Domain::Grid { width: 6, height: 6 }
}

/// Rows of a matrix as nested vectors.
pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// x·M for a row vector x.
pub fn vecmat(x: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.cols()).map(|c| x.iter().enumerate().map(|(k, v)| v * m.get(k, c)).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.01 * x
    }
}

pub fn schema(width: usize, height: usize) -> ObservationSchema {
    ObservationSchema {
        env: "toy".into(),
        domain: Domain::Grid { width, height },
        feature_names: vec!["type.agent".into(), "type.box".into(), "level".into(), "self".into()],
        type_offset: 0,
        type_names: vec!["agent".into(), "box".into()],
        type_radii: vec![0.0, 0.0],
    }
}

/// Flat observation of `n` entities on distinct cells of a `size`² grid.
pub fn random_observation<R: Rng>(rng: &mut R, n: usize, size: i64) -> Vec<f64> {
    let mut cells = std::collections::HashSet::new();
    let mut obs = Vec::new();
    while cells.len() < n {
        let c = (rng.gen_range(0..size), rng.gen_range(0..size));
        if cells.insert(c) {
            let agent = rng.gen_bool(0.5);
            obs.extend([
                c.0 as f64,
                c.1 as f64,
                agent as u8 as f64,
                !agent as u8 as f64,
                rng.gen_range(1..4) as f64,
                (cells.len() == 1) as u8 as f64,
            ]);
        }
    }
    obs
}
