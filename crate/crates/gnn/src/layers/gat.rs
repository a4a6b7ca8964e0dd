use std::fmt;

use marc_tensor::nn::{init_uniform, LEAKY_SLOPE};
use marc_tensor::{Bound, ParamId, ParamSet, Tape, Var};
use rand::RngCore;

use super::{check_input, Activation, GraphLayer, LayerSpec};
use crate::batch::GraphBatch;
use crate::error::Result;

/// Single-head attention over the complete graph (self included), on node
/// features augmented with their two normalised coordinates:
/// z′_i = σ(Σ_j a_ij z̃_j W), a_i· = softmax_j(LeakyReLU(z̃_i W q + z̃_j W k)).
pub struct GatLayer {
    pub weight: ParamId,
    pub query: ParamId,
    pub key: ParamId,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl fmt::Debug for GatLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GatLayer({}+2→{})", self.input, self.output)
    }
}

impl GatLayer {
    pub fn new(spec: &LayerSpec, params: &mut ParamSet, rng: &mut dyn RngCore) -> Self {
        let weight = params.add(format!("{}.weight", spec.name), init_uniform(spec.input + 2, spec.output, rng));
        let query = params.add(format!("{}.query", spec.name), init_uniform(spec.output, 1, rng));
        let key = params.add(format!("{}.key", spec.name), init_uniform(spec.output, 1, rng));
        Self {
            weight,
            query,
            key,
            input: spec.input,
            output: spec.output,
            activation: spec.activation,
        }
    }

    /// Attention coefficient per complete-graph edge, as an E×1 column.
    pub fn attention(&self, tape: &mut Tape, params: &Bound, batch: &GraphBatch, z: Var) -> Result<(Var, Var)> {
        check_input(tape, z, "gat", self.input)?;
        let coords = tape.constant(batch.coords().clone());
        let aug = tape.concat_cols(&[z, coords])?;
        let h = tape.matmul(aug, params.var(self.weight))?;
        let sq = tape.matmul(h, params.var(self.query))?;
        let sk = tape.matmul(h, params.var(self.key))?;
        let edges = batch.complete_edges();
        let qi = tape.gather_rows(sq, edges.dst.clone())?;
        let kj = tape.gather_rows(sk, edges.src.clone())?;
        let logits = tape.add(qi, kj)?;
        let logits = tape.leaky_relu(logits, LEAKY_SLOPE);
        let alpha = tape.segment_softmax(logits, edges.dst.clone(), batch.node_count())?;
        Ok((alpha, h))
    }
}

impl GraphLayer for GatLayer {
    fn kind(&self) -> &'static str {
        "gat"
    }

    fn input_width(&self) -> usize {
        self.input
    }

    fn output_width(&self) -> usize {
        self.output
    }

    fn forward(&self, tape: &mut Tape, params: &Bound, batch: &GraphBatch, z: Var) -> Result<Var> {
        let (alpha, h) = self.attention(tape, params, batch, z)?;
        let edges = batch.complete_edges();
        let messages = tape.gather_rows(h, edges.src.clone())?;
        let weighted = tape.mul_col(messages, alpha)?;
        let summed = tape.scatter_add_rows(weighted, edges.dst.clone(), batch.node_count())?;
        Ok(self.activation.apply(tape, summed))
    }
}
