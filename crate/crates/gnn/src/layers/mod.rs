//! Graph layers behind one trait, constructed by name through a registry.

use std::fmt::Debug;

use marc_tensor::nn::LEAKY_SLOPE;
use marc_tensor::{Bound, ParamSet, Tape, Var};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::error::{GnnError, Result};

mod gat;
mod rgat;
mod rgcn;

pub use gat::GatLayer;
pub use rgat::RgatLayer;
pub use rgcn::RgcnLayer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    LeakyRelu,
    /// Linear; for tests that check the pre-activation algebra.
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
            Activation::Identity => x,
        }
    }
}

/// Everything a layer constructor needs.
#[derive(Debug, Clone)]
pub struct LayerSpec<'a> {
    /// Parameter-name prefix.
    pub name: &'a str,
    pub input: usize,
    pub output: usize,
    pub relations: &'a [String],
    pub activation: Activation,
    /// R-GAT only: add a self edge per node with its own weights.
    pub self_loop: bool,
}

pub trait GraphLayer: Debug {
    fn kind(&self) -> &'static str;

    /// Width of the node features this layer consumes.
    fn input_width(&self) -> usize;

    fn output_width(&self) -> usize;

    /// Maps N×input node features to N×output.
    fn forward(&self, tape: &mut Tape, params: &Bound, batch: &GraphBatch, z: Var) -> Result<Var>;
}

pub type LayerBuilder = fn(&LayerSpec, &mut ParamSet, &mut dyn RngCore) -> Box<dyn GraphLayer>;

/// Layer constructors by name.
#[derive(Debug, Clone)]
pub struct LayerRegistry {
    entries: Vec<(&'static str, LayerBuilder)>,
}

impl Default for LayerRegistry {
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register("rgcn", |s, p, rng| Box::new(RgcnLayer::new(s, p, rng)));
        r.register("gat", |s, p, rng| Box::new(GatLayer::new(s, p, rng)));
        r.register("rgat", |s, p, rng| Box::new(RgatLayer::new(s, p, rng)));
        r
    }
}

impl LayerRegistry {
    /// Adds or replaces a builder.
    pub fn register(&mut self, name: &'static str, builder: LayerBuilder) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(e) => e.1 = builder,
            None => self.entries.push((name, builder)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| *n == name)
    }

    pub fn build(
        &self,
        kind: &str,
        spec: &LayerSpec,
        params: &mut ParamSet,
        rng: &mut dyn RngCore,
    ) -> Result<Box<dyn GraphLayer>> {
        let (_, builder) = self
            .entries
            .iter()
            .find(|(n, _)| *n == kind)
            .ok_or_else(|| GnnError::UnknownLayer {
                name: kind.to_string(),
                valid: self.names().join(", "),
            })?;
        Ok(builder(spec, params, rng))
    }
}

pub(crate) fn check_input(tape: &Tape, z: Var, layer: &str, expected: usize) -> Result<()> {
    let got = tape.shape(z).1;
    if got != expected {
        return Err(GnnError::Width {
            layer: layer.to_string(),
            got,
            expected,
        });
    }
    Ok(())
}

pub(crate) fn check_relations(batch: &GraphBatch, expected: usize) -> Result<()> {
    if batch.relation_count() != expected {
        return Err(GnnError::Relations {
            got: batch.relation_count(),
            expected,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn registry_lists_builtin_layers() {
        let reg = LayerRegistry::default();
        assert_eq!(reg.names(), vec!["rgcn", "gat", "rgat"]);
        let mut params = ParamSet::new();
        let mut rng = rand::rngs::StdRng::seed_from_u64(0);
        let spec = LayerSpec {
            name: "g",
            input: 3,
            output: 4,
            relations: &["left".to_string()],
            activation: Activation::LeakyRelu,
            self_loop: false,
        };
        let err = reg.build("gcn", &spec, &mut params, &mut rng).unwrap_err();
        assert_eq!(err.to_string(), "unknown graph layer 'gcn' (valid: rgcn, gat, rgat)");
        let layer = reg.build("rgat", &spec, &mut params, &mut rng).unwrap();
        assert_eq!((layer.kind(), layer.input_width(), layer.output_width()), ("rgat", 3, 4));
    }
}
