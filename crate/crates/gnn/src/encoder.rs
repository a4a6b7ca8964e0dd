//! Observation encoder: entity embedding, graph layers, max-pool readout.

use marc_relgraph::{
    build_graph, extract_entities, grid_as_entities, ObservationSchema, RelationSet, RelationalGraph,
};
use marc_tensor::nn::Dense;
use marc_tensor::{Bound, Matrix, ParamSet, Tape, Var};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::error::{GnnError, Result};
use crate::layers::{Activation, GraphLayer, LayerRegistry, LayerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Registry name of the graph layer: `rgcn`, `gat` or `rgat`.
    pub architecture: String,
    pub layers: usize,
    pub embed_dim: usize,
    pub rgat_self_loop: bool,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            architecture: "rgcn".into(),
            layers: 2,
            embed_dim: 48,
            rgat_self_loop: false,
            activation: Activation::LeakyRelu,
        }
    }
}

/// Which entities make up the graph nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntitySource {
    /// Agents and objects only.
    #[default]
    Objects,
    /// Every grid cell, empty ones included.
    Grid,
}

impl EntitySource {
    pub fn feature_width(self, schema: &ObservationSchema) -> usize {
        match self {
            EntitySource::Objects => schema.feature_width(),
            EntitySource::Grid => schema.feature_width() + 1,
        }
    }
}

/// Raw observation → relational graph.
pub fn observation_graph(
    observation: &[f64],
    schema: &ObservationSchema,
    relations: &RelationSet,
    source: EntitySource,
) -> Result<RelationalGraph> {
    let entities = match source {
        EntitySource::Objects => extract_entities(observation, schema)?,
        EntitySource::Grid => grid_as_entities(observation, schema)?,
    };
    Ok(build_graph(entities, relations)?)
}

/// Componentwise maximum over the nodes of each graph (G×d′).
pub fn max_pool(tape: &mut Tape, z: Var, offsets: &[usize]) -> Result<Var> {
    if offsets.windows(2).any(|w| w[0] == w[1]) || offsets.len() < 2 {
        return Err(GnnError::EmptyGraph);
    }
    Ok(tape.segment_max(z, offsets)?)
}

#[derive(Debug)]
pub struct Encoder {
    pub embed: Dense,
    pub layers: Vec<Box<dyn GraphLayer>>,
    pub activation: Activation,
}

impl Encoder {
    pub fn new(
        config: &EncoderConfig,
        feature_width: usize,
        relations: &[String],
        params: &mut ParamSet,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        Self::with_registry(&LayerRegistry::default(), config, feature_width, relations, params, rng)
    }

    pub fn with_registry(
        registry: &LayerRegistry,
        config: &EncoderConfig,
        feature_width: usize,
        relations: &[String],
        params: &mut ParamSet,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if config.layers == 0 {
            return Err(GnnError::NoLayers);
        }
        let width = config.embed_dim;
        let embed = Dense::new(params, "encoder.embed", feature_width, width, true, rng);
        let layers = (0..config.layers)
            .map(|i| {
                let name = format!("encoder.{}{i}", config.architecture);
                let spec = LayerSpec {
                    name: &name,
                    input: width,
                    output: width,
                    relations,
                    activation: config.activation,
                    self_loop: config.rgat_self_loop,
                };
                registry.build(&config.architecture, &spec, params, rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            embed,
            layers,
            activation: config.activation,
        })
    }

    pub fn input_width(&self) -> usize {
        self.embed.input
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.embed.output, |l| l.output_width())
    }

    /// Node features after the last graph layer (N×d′), before pooling.
    pub fn node_features(&self, tape: &mut Tape, params: &Bound, batch: &GraphBatch) -> Result<Var> {
        if batch.features().cols() != self.input_width() {
            return Err(GnnError::Width {
                layer: "encoder.embed".into(),
                got: batch.features().cols(),
                expected: self.input_width(),
            });
        }
        let x = tape.constant(batch.features().clone());
        let h = self.embed.forward(tape, params, x)?;
        let mut z = self.activation.apply(tape, h);
        for layer in &self.layers {
            z = layer.forward(tape, params, batch, z)?;
        }
        Ok(z)
    }

    /// One encoding per graph in the batch (G×d′).
    pub fn forward(&self, tape: &mut Tape, params: &Bound, batch: &GraphBatch) -> Result<Var> {
        let z = self.node_features(tape, params, batch)?;
        max_pool(tape, z, batch.offsets())
    }
}

/// Encodes one raw observation without recording gradients.
pub fn encode_observation(
    observation: &[f64],
    schema: &ObservationSchema,
    relations: &RelationSet,
    source: EntitySource,
    encoder: &Encoder,
    params: &ParamSet,
) -> Result<Vec<f64>> {
    let graph = observation_graph(observation, schema, relations, source)?;
    let batch = GraphBatch::from_graphs([&graph], &schema.domain)?;
    let mut tape = Tape::new();
    let bound = params.bind_frozen(&mut tape);
    let e = encoder.forward(&mut tape, &bound, &batch)?;
    Ok(tape.value(e).as_slice().to_vec())
}

/// Pooled encodings for a batch as a plain matrix.
pub fn encode_batch(encoder: &Encoder, params: &ParamSet, batch: &GraphBatch) -> Result<Matrix> {
    let mut tape = Tape::new();
    let bound = params.bind_frozen(&mut tape);
    let e = encoder.forward(&mut tape, &bound, batch)?;
    Ok(tape.value(e).clone())
}
