//! Spatial predicates and the named presets that group them.
//!
//! Every predicate reads `r(a, b)` as "a stands in relation r to b"; for
//! example `left(a, b)` holds when `x_a < x_b`. All predicates depend only on
//! coordinate differences, so shifting both arguments by the same offset
//! never changes the result.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::entity::Site;
use crate::error::{GraphError, Result};

pub trait SpatialRelation: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn holds(&self, a: &Site, b: &Site) -> bool;
}

/// Which adjacency rule grid `adjacent` uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyRule {
    /// `|dx| ≤ 1 ∧ |dy| ≤ 1` (8-neighbourhood).
    #[default]
    Chebyshev,
    /// `|dx| ≤ 1 ∨ |dy| ≤ 1`, the disjunction as printed.
    VerbatimOr,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignedRule {
    /// `x_a = x_b ∧ y_a = y_b`.
    #[default]
    Colocated,
    /// `x_a = x_b ∨ y_a = y_b`.
    RowOrCol,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationOptions {
    pub adjacency: AdjacencyRule,
    pub aligned: AlignedRule,
    /// Continuous adjacency threshold beyond the two radii (one agent radius).
    pub contact_margin: f64,
}

impl Default for RelationOptions {
    fn default() -> Self {
        Self {
            adjacency: AdjacencyRule::Chebyshev,
            aligned: AlignedRule::Colocated,
            contact_margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Axis {
    X,
    Y,
}

/// `left`, `right`, `top`, `bottom`: strict order along one axis.
#[derive(Debug)]
struct Remote {
    name: &'static str,
    axis: Axis,
    less: bool,
}

impl SpatialRelation for Remote {
    fn name(&self) -> &str {
        self.name
    }

    fn holds(&self, a: &Site, b: &Site) -> bool {
        let (va, vb) = match self.axis {
            Axis::X => (a.pos.x, b.pos.x),
            Axis::Y => (a.pos.y, b.pos.y),
        };
        if self.less {
            va < vb
        } else {
            va > vb
        }
    }
}

#[derive(Debug)]
struct Aligned(AlignedRule);

impl SpatialRelation for Aligned {
    fn name(&self) -> &str {
        "aligned"
    }

    fn holds(&self, a: &Site, b: &Site) -> bool {
        let (sx, sy) = (a.pos.x == b.pos.x, a.pos.y == b.pos.y);
        match self.0 {
            AlignedRule::Colocated => sx && sy,
            AlignedRule::RowOrCol => sx || sy,
        }
    }
}

#[derive(Debug)]
struct Adjacent(AdjacencyRule);

impl SpatialRelation for Adjacent {
    fn name(&self) -> &str {
        "adjacent"
    }

    fn holds(&self, a: &Site, b: &Site) -> bool {
        let (nx, ny) = ((a.pos.x - b.pos.x).abs() <= 1.0, (a.pos.y - b.pos.y).abs() <= 1.0);
        match self.0 {
            AdjacencyRule::Chebyshev => nx && ny,
            AdjacencyRule::VerbatimOr => nx || ny,
        }
    }
}

/// One of the eight neighbouring cells: `x_a − x_b = dx ∧ y_a − y_b = dy`.
#[derive(Debug)]
struct Local {
    name: &'static str,
    dx: f64,
    dy: f64,
}

impl SpatialRelation for Local {
    fn name(&self) -> &str {
        self.name
    }

    fn holds(&self, a: &Site, b: &Site) -> bool {
        a.pos.x - b.pos.x == self.dx && a.pos.y - b.pos.y == self.dy
    }
}

/// Continuous contact: centre distance ≤ r_a + r_b + margin.
#[derive(Debug)]
struct Contact {
    margin: f64,
}

impl SpatialRelation for Contact {
    fn name(&self) -> &str {
        "adjacent"
    }

    fn holds(&self, a: &Site, b: &Site) -> bool {
        a.pos.distance(b.pos) <= a.radius + b.radius + self.margin
    }
}

/// Direction of `a − b` falls in the half-open 45° sector centred on
/// `index · 45°` (counterclockwise from east). A boundary angle belongs to
/// the counterclockwise neighbour; coincident points lie in no sector.
#[derive(Debug)]
struct Sector {
    name: &'static str,
    index: u8,
}

pub(crate) fn sector_of(dx: f64, dy: f64) -> Option<u8> {
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    let deg = dy.atan2(dx).to_degrees();
    let shifted = (deg + 22.5).rem_euclid(360.0);
    Some(((shifted / 45.0).floor() as u8) % 8)
}

impl SpatialRelation for Sector {
    fn name(&self) -> &str {
        self.name
    }

    fn holds(&self, a: &Site, b: &Site) -> bool {
        sector_of(a.pos.x - b.pos.x, a.pos.y - b.pos.y) == Some(self.index)
    }
}

const LOCAL: [(&str, f64, f64); 8] = [
    ("rightAdj", 1.0, 0.0),
    ("leftAdj", -1.0, 0.0),
    ("topAdj", 0.0, 1.0),
    ("bottomAdj", 0.0, -1.0),
    ("bottomLeftAdj", -1.0, -1.0),
    ("bottomRightAdj", 1.0, -1.0),
    ("topLeftAdj", -1.0, 1.0),
    ("topRightAdj", 1.0, 1.0),
];

const SECTORS: [&str; 8] = [
    "east",
    "northEast",
    "north",
    "northWest",
    "west",
    "southWest",
    "south",
    "southEast",
];

/// Names accepted by [`grid_relation`].
pub const GRID_RELATIONS: [&str; 14] = [
    "adjacent",
    "aligned",
    "left",
    "right",
    "top",
    "bottom",
    "leftAdj",
    "rightAdj",
    "topAdj",
    "topLeftAdj",
    "topRightAdj",
    "bottomAdj",
    "bottomLeftAdj",
    "bottomRightAdj",
];

fn remote(name: &str) -> Option<Remote> {
    let (name, axis, less) = match name {
        "left" => ("left", Axis::X, true),
        "right" => ("right", Axis::X, false),
        // "down" is the same predicate as "bottom"
        "bottom" | "down" => ("bottom", Axis::Y, true),
        "top" => ("top", Axis::Y, false),
        _ => return None,
    };
    Some(Remote { name, axis, less })
}

/// A grid predicate by name.
pub fn grid_relation(name: &str, opts: &RelationOptions) -> Result<Arc<dyn SpatialRelation>> {
    if let Some(r) = remote(name) {
        return Ok(Arc::new(r));
    }
    match name {
        "aligned" => return Ok(Arc::new(Aligned(opts.aligned))),
        "adjacent" => return Ok(Arc::new(Adjacent(opts.adjacency))),
        _ => {}
    }
    LOCAL
        .iter()
        .find(|(n, ..)| *n == name)
        .map(|&(name, dx, dy)| Arc::new(Local { name, dx, dy }) as Arc<dyn SpatialRelation>)
        .ok_or_else(|| GraphError::UnknownRelation(name.to_string()))
}

/// A continuous-domain predicate by name (remote, contact adjacency, sectors).
pub fn continuous_relation(name: &str, opts: &RelationOptions) -> Result<Arc<dyn SpatialRelation>> {
    if let Some(r) = remote(name) {
        return Ok(Arc::new(r));
    }
    if name == "adjacent" {
        return Ok(Arc::new(Contact {
            margin: opts.contact_margin,
        }));
    }
    SECTORS
        .iter()
        .position(|&n| n == name)
        .map(|i| {
            Arc::new(Sector {
                name: SECTORS[i],
                index: i as u8,
            }) as Arc<dyn SpatialRelation>
        })
        .ok_or_else(|| GraphError::UnknownRelation(name.to_string()))
}

/// Ordered relation list; the position of a relation indexes its weights.
#[derive(Debug, Clone)]
pub struct RelationSet {
    relations: Vec<Arc<dyn SpatialRelation>>,
}

impl RelationSet {
    pub fn new(relations: Vec<Arc<dyn SpatialRelation>>) -> Result<Self> {
        for (i, r) in relations.iter().enumerate() {
            if relations[..i].iter().any(|o| o.name() == r.name()) {
                return Err(GraphError::DuplicateRelation(r.name().to_string()));
            }
        }
        Ok(Self { relations })
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn SpatialRelation>> {
        self.relations.iter()
    }

    pub fn get(&self, i: usize) -> &dyn SpatialRelation {
        self.relations[i].as_ref()
    }

    pub fn names(&self) -> Vec<&str> {
        self.relations.iter().map(|r| r.name()).collect()
    }
}

struct Preset {
    name: &'static str,
    continuous: bool,
    relations: &'static [&'static str],
}

const PRESETS: [Preset; 5] = [
    Preset {
        name: "default",
        continuous: false,
        relations: &["adjacent", "aligned", "left", "right", "top", "bottom"],
    },
    Preset {
        name: "local",
        continuous: false,
        relations: &[
            "leftAdj",
            "rightAdj",
            "topAdj",
            "topLeftAdj",
            "topRightAdj",
            "bottomAdj",
            "bottomLeftAdj",
            "bottomRightAdj",
        ],
    },
    Preset {
        name: "all",
        continuous: false,
        relations: &GRID_RELATIONS,
    },
    Preset {
        name: "continuous-default",
        continuous: true,
        relations: &["adjacent", "left", "right", "top", "bottom"],
    },
    Preset {
        name: "continuous-octagonal",
        continuous: true,
        relations: &[
            "east",
            "northEast",
            "north",
            "northWest",
            "west",
            "southWest",
            "south",
            "southEast",
            "adjacent",
        ],
    },
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

/// Whether a preset is meant for continuous worlds.
pub fn preset_is_continuous(name: &str) -> Result<bool> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .map(|p| p.continuous)
        .ok_or_else(|| GraphError::UnknownPreset {
            name: name.to_string(),
            valid: preset_names().join(", "),
        })
}

/// Relation set registered under `name`.
pub fn relation_preset(name: &str, opts: &RelationOptions) -> Result<RelationSet> {
    let preset = PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| GraphError::UnknownPreset {
            name: name.to_string(),
            valid: preset_names().join(", "),
        })?;
    let build = if preset.continuous {
        continuous_relation
    } else {
        grid_relation
    };
    let relations = preset
        .relations
        .iter()
        .map(|n| build(n, opts))
        .collect::<Result<Vec<_>>>()?;
    RelationSet::new(relations)
}

/// Truth value of `rel(a, b)`.
pub fn eval_relation(rel: &dyn SpatialRelation, a: &Site, b: &Site) -> bool {
    rel.holds(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> RelationOptions {
        RelationOptions::default()
    }

    fn grid(name: &str) -> Arc<dyn SpatialRelation> {
        grid_relation(name, &opts()).unwrap()
    }

    #[test]
    fn forced_examples() {
        assert!(grid("left").holds(&Site::cell(1, 2), &Site::cell(3, 5)));
        assert!(grid("aligned").holds(&Site::cell(2, 3), &Site::cell(2, 3)));
        assert!(!grid("aligned").holds(&Site::cell(2, 3), &Site::cell(2, 4)));
        assert!(grid("topRightAdj").holds(&Site::cell(4, 5), &Site::cell(3, 4)));
    }

    #[test]
    fn down_aliases_bottom() {
        let r = grid("down");
        assert_eq!(r.name(), "bottom");
        assert!(r.holds(&Site::cell(0, 0), &Site::cell(0, 1)));
    }

    #[test]
    fn adjacency_rules_differ_far_apart() {
        let (a, b) = (Site::cell(0, 0), Site::cell(7, 1));
        let cheb = grid_relation("adjacent", &opts()).unwrap();
        let or = grid_relation(
            "adjacent",
            &RelationOptions {
                adjacency: AdjacencyRule::VerbatimOr,
                ..opts()
            },
        )
        .unwrap();
        assert!(!cheb.holds(&a, &b));
        assert!(or.holds(&a, &b));
    }

    #[test]
    fn row_or_col_alignment() {
        let r = grid_relation(
            "aligned",
            &RelationOptions {
                aligned: AlignedRule::RowOrCol,
                ..opts()
            },
        )
        .unwrap();
        assert!(r.holds(&Site::cell(2, 3), &Site::cell(2, 9)));
        assert!(!r.holds(&Site::cell(2, 3), &Site::cell(1, 9)));
    }

    #[test]
    fn preset_sizes() {
        let sizes: Vec<usize> = preset_names()
            .iter()
            .map(|n| relation_preset(n, &opts()).unwrap().len())
            .collect();
        assert_eq!(sizes, vec![6, 8, 14, 5, 9]);
    }

    #[test]
    fn unknown_preset_lists_valid_names() {
        let err = relation_preset("diagonal", &opts()).unwrap_err().to_string();
        assert!(err.contains("continuous-octagonal") && err.contains("default"), "{err}");
    }

    #[test]
    fn duplicate_relation_names_rejected() {
        let err = RelationSet::new(vec![grid("left"), grid("left")]).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateRelation(_)));
    }

    #[test]
    fn sector_boundaries_go_counterclockwise() {
        assert_eq!(sector_of(1.0, 0.0), Some(0));
        assert_eq!(sector_of(1.0, 1.0), Some(1));
        assert_eq!(sector_of(0.0, 1.0), Some(2));
        assert_eq!(sector_of(-1.0, 0.0), Some(4));
        assert_eq!(sector_of(1.0, -1.0), Some(7));
        assert_eq!(sector_of(0.0, 0.0), None);
        // exactly on the east/north-east boundary
        let t = 22.5f64.to_radians();
        let s = sector_of(t.cos(), t.sin()).unwrap();
        assert!(s == 1 || s == 0);
        assert_eq!(sector_of(1.0, -1e-12), Some(0));
    }

    #[test]
    fn contact_uses_radii() {
        let r = continuous_relation("adjacent", &opts()).unwrap();
        let a = Site {
            pos: crate::Point::new(0.0, 0.0),
            radius: 0.05,
        };
        let b = Site {
            pos: crate::Point::new(0.19, 0.0),
            radius: 0.1,
        };
        assert!(r.holds(&a, &b));
        let c = Site {
            pos: crate::Point::new(0.21, 0.0),
            radius: 0.1,
        };
        assert!(!r.holds(&a, &c));
    }
}
