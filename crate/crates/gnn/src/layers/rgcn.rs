use std::fmt;

use marc_tensor::nn::init_uniform;
use marc_tensor::{Bound, ParamId, ParamSet, Tape, Var};
use rand::RngCore;

use super::{check_input, check_relations, Activation, GraphLayer, LayerSpec};
use crate::batch::GraphBatch;
use crate::error::Result;

/// z′_v = σ(Σ_r Σ_{u∈N_r(v)} z_u W_r / |N_r(v)| + z_v W_0).
///
/// Weights are stored input×output, so `W_r` here is the transpose of the
/// column-vector convention.
pub struct RgcnLayer {
    pub self_weight: ParamId,
    pub relation_weights: Vec<ParamId>,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl fmt::Debug for RgcnLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RgcnLayer({}→{}, {} relations)", self.input, self.output, self.relation_weights.len())
    }
}

impl RgcnLayer {
    pub fn new(spec: &LayerSpec, params: &mut ParamSet, rng: &mut dyn RngCore) -> Self {
        let self_weight = params.add(format!("{}.self", spec.name), init_uniform(spec.input, spec.output, rng));
        let relation_weights = spec
            .relations
            .iter()
            .map(|r| params.add(format!("{}.rel.{r}", spec.name), init_uniform(spec.input, spec.output, rng)))
            .collect();
        Self {
            self_weight,
            relation_weights,
            input: spec.input,
            output: spec.output,
            activation: spec.activation,
        }
    }
}

impl GraphLayer for RgcnLayer {
    fn kind(&self) -> &'static str {
        "rgcn"
    }

    fn input_width(&self) -> usize {
        self.input
    }

    fn output_width(&self) -> usize {
        self.output
    }

    fn forward(&self, tape: &mut Tape, params: &Bound, batch: &GraphBatch, z: Var) -> Result<Var> {
        check_input(tape, z, "rgcn", self.input)?;
        check_relations(batch, self.relation_weights.len())?;
        // one product against [W_0 | W_1 | …], then sparse per-block mixing
        let mut blocks = vec![params.var(self.self_weight)];
        blocks.extend(self.relation_weights.iter().map(|&w| params.var(w)));
        let w = tape.concat_cols(&blocks)?;
        let h = tape.matmul(z, w)?;
        let mixed = tape.block_mix(h, batch.degree_terms(), self.output, batch.node_count())?;
        Ok(self.activation.apply(tape, mixed))
    }
}
