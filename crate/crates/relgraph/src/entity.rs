//! Entities and the observation layout they are extracted from.
//!
//! A raw observation is a flat vector of fixed-width entity blocks
//! `[x, y, f_1, …, f_d]`. The first two values of a block are the entity's
//! position; everything after is its non-spatial feature vector.

use serde::{Deserialize, Serialize};

use crate::error::{GraphError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn shifted(self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
        }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Where an entity sits: a position plus its physical radius (0 on grids).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub pos: Point,
    pub radius: f64,
}

impl Site {
    pub const fn cell(x: i64, y: i64) -> Self {
        Self {
            pos: Point::new(x as f64, y as f64),
            radius: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: usize,
    pub site: Site,
    pub features: Vec<f64>,
}

impl Entity {
    pub fn position(&self) -> Point {
        self.site.pos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Grid { width: usize, height: usize },
    Continuous { half_extent: f64 },
}

impl Domain {
    pub fn is_grid(&self) -> bool {
        matches!(self, Domain::Grid { .. })
    }

    /// Maps a position into `[0, 1]²` (grid: by cell count; continuous:
    /// by the world half-width).
    pub fn normalize(&self, p: Point) -> Point {
        match *self {
            Domain::Grid { width, height } => Point::new(
                p.x / (width.max(2) - 1) as f64,
                p.y / (height.max(2) - 1) as f64,
            ),
            Domain::Continuous { half_extent } => Point::new(
                (p.x + half_extent) / (2.0 * half_extent),
                (p.y + half_extent) / (2.0 * half_extent),
            ),
        }
    }
}

/// Per-environment declaration of the observation layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSchema {
    pub env: String,
    pub domain: Domain,
    /// Names of the non-spatial features, in block order.
    pub feature_names: Vec<String>,
    /// Offset of the entity-type one-hot inside the feature vector.
    pub type_offset: usize,
    /// Entity type names; the one-hot has this many slots.
    pub type_names: Vec<String>,
    /// Physical radius per entity type (continuous domains).
    pub type_radii: Vec<f64>,
}

impl ObservationSchema {
    /// The feature width d.
    pub fn feature_width(&self) -> usize {
        self.feature_names.len()
    }

    /// Width of one raw entity block, `2 + d`.
    pub fn block_width(&self) -> usize {
        2 + self.feature_width()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Entity type of a feature vector (argmax of the type one-hot).
    pub fn type_of(&self, features: &[f64]) -> usize {
        let slots = &features[self.type_offset..self.type_offset + self.type_names.len()];
        slots
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    pub fn entity_count(&self, observation: &[f64]) -> Result<usize> {
        let w = self.block_width();
        if observation.is_empty() || observation.len() % w != 0 {
            return Err(GraphError::Width {
                env: self.env.clone(),
                len: observation.len(),
                block: w,
            });
        }
        Ok(observation.len() / w)
    }
}

/// Splits a raw observation into entities, separating positions from features.
pub fn extract_entities(observation: &[f64], schema: &ObservationSchema) -> Result<Vec<Entity>> {
    let n = schema.entity_count(observation)?;
    let w = schema.block_width();
    let continuous = !schema.domain.is_grid();
    Ok((0..n)
        .map(|id| {
            let block = &observation[id * w..(id + 1) * w];
            let features = block[2..].to_vec();
            let radius = if continuous {
                schema.type_radii.get(schema.type_of(&features)).copied().unwrap_or(0.0)
            } else {
                0.0
            };
            Entity {
                id,
                site: Site {
                    pos: Point::new(block[0], block[1]),
                    radius,
                },
                features,
            }
        })
        .collect())
}

/// One entity per grid cell, for the full-grid ablation. Cell features are
/// the elementwise maximum of the features of the entities in that cell plus
/// a trailing "empty" flag, which is 1 exactly for unoccupied cells.
pub fn grid_as_entities(observation: &[f64], schema: &ObservationSchema) -> Result<Vec<Entity>> {
    let Domain::Grid { width, height } = schema.domain else {
        return Err(GraphError::NotGrid(schema.env.clone()));
    };
    let objects = extract_entities(observation, schema)?;
    let d = schema.feature_width();
    let mut cells: Vec<Option<Vec<f64>>> = vec![None; width * height];
    for e in &objects {
        let (x, y) = (e.site.pos.x, e.site.pos.y);
        if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 || x.fract() != 0.0 || y.fract() != 0.0 {
            return Err(GraphError::OffGrid { x, y, width, height });
        }
        let cell = &mut cells[y as usize * width + x as usize];
        match cell {
            Some(f) => f.iter_mut().zip(&e.features).for_each(|(a, &b)| *a = a.max(b)),
            None => *cell = Some(e.features.clone()),
        }
    }
    Ok(cells
        .into_iter()
        .enumerate()
        .map(|(id, cell)| {
            let mut features = cell.clone().unwrap_or_else(|| vec![0.0; d]);
            features.push(if cell.is_none() { 1.0 } else { 0.0 });
            Entity {
                id,
                site: Site::cell((id % width) as i64, (id / width) as i64),
                features,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_schema(width: usize, height: usize) -> ObservationSchema {
        ObservationSchema {
            env: "toy".into(),
            domain: Domain::Grid { width, height },
            feature_names: vec!["type.agent".into(), "type.box".into(), "level".into()],
            type_offset: 0,
            type_names: vec!["agent".into(), "box".into()],
            type_radii: vec![0.0, 0.0],
        }
    }

    #[test]
    fn positions_are_split_from_features() {
        let schema = toy_schema(5, 5);
        let obs = [1.0, 2.0, 1.0, 0.0, 3.0, 4.0, 0.0, 0.0, 1.0, 2.0];
        let es = extract_entities(&obs, &schema).unwrap();
        assert_eq!(es.len(), 2);
        assert_eq!(es[0].position(), Point::new(1.0, 2.0));
        assert_eq!(es[0].features, vec![1.0, 0.0, 3.0]);
        assert_eq!(es[1].features.len(), schema.feature_width());
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let schema = toy_schema(5, 5);
        let err = extract_entities(&[0.0; 7], &schema).unwrap_err();
        assert!(matches!(err, GraphError::Width { len: 7, block: 5, .. }));
    }

    #[test]
    fn single_agent_is_one_entity() {
        let schema = toy_schema(3, 3);
        let es = extract_entities(&[0.0, 0.0, 1.0, 0.0, 1.0], &schema).unwrap();
        assert_eq!(es.len(), 1);
    }

    #[test]
    fn grid_entities_count_cells() {
        let schema = toy_schema(5, 5);
        let mut obs = Vec::new();
        for (x, y, t) in [(0.0, 0.0, 0), (4.0, 4.0, 0), (2.0, 2.0, 1), (1.0, 3.0, 1)] {
            obs.extend([x, y, (t == 0) as i32 as f64, (t == 1) as i32 as f64, 1.0]);
        }
        let cells = grid_as_entities(&obs, &schema).unwrap();
        assert_eq!(cells.len(), 25);
        let empty = cells.iter().filter(|c| c.features[3] == 1.0).count();
        assert_eq!(empty, 21);
        assert_eq!(cells[2 * 5 + 2].features, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(cells[7].position(), Point::new(2.0, 1.0));
    }

    #[test]
    fn one_cell_grid() {
        let schema = toy_schema(1, 1);
        let cells = grid_as_entities(&[0.0, 0.0, 1.0, 0.0, 2.0], &schema).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].features, vec![1.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn grid_entities_reject_continuous() {
        let mut schema = toy_schema(1, 1);
        schema.domain = Domain::Continuous { half_extent: 1.0 };
        assert!(matches!(
            grid_as_entities(&[0.0, 0.0, 1.0, 0.0, 2.0], &schema),
            Err(GraphError::NotGrid(_))
        ));
    }
}
