use std::fmt;
use std::rc::Rc;

use marc_tensor::nn::{init_uniform, LEAKY_SLOPE};
use marc_tensor::{Bound, MixTerm, ParamId, ParamSet, Tape, Var};
use rand::RngCore;

use super::{check_input, check_relations, Activation, GraphLayer, LayerSpec};
use crate::batch::{EdgeIndex, GraphBatch};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct RelationHead {
    pub weight: ParamId,
    pub query: ParamId,
    pub key: ParamId,
}

/// z′_i = σ(Σ_r Σ_{j∈N_r(i)} a_r(i, j) z_j W_r), with logits
/// LeakyReLU(z_i W_r q_r + z_j W_r k_r) normalised jointly over every
/// incoming edge of i. A node without incoming edges gets σ(0) unless the
/// layer adds self loops, which carry their own head.
pub struct RgatLayer {
    pub heads: Vec<RelationHead>,
    pub self_loop: bool,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl fmt::Debug for RgatLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "RgatLayer({}→{}, {} heads, self_loop={})",
            self.input,
            self.output,
            self.heads.len(),
            self.self_loop
        )
    }
}

impl RgatLayer {
    pub fn new(spec: &LayerSpec, params: &mut ParamSet, rng: &mut dyn RngCore) -> Self {
        let mut names: Vec<&str> = spec.relations.iter().map(String::as_str).collect();
        if spec.self_loop {
            names.push("self");
        }
        let heads = names
            .iter()
            .map(|r| RelationHead {
                weight: params.add(format!("{}.rel.{r}.weight", spec.name), init_uniform(spec.input, spec.output, rng)),
                query: params.add(format!("{}.rel.{r}.query", spec.name), init_uniform(spec.output, 1, rng)),
                key: params.add(format!("{}.rel.{r}.key", spec.name), init_uniform(spec.output, 1, rng)),
            })
            .collect();
        Self {
            heads,
            self_loop: spec.self_loop,
            input: spec.input,
            output: spec.output,
            activation: spec.activation,
        }
    }

    fn relation_count(&self) -> usize {
        self.heads.len() - self.self_loop as usize
    }

    fn edges<'b>(&self, batch: &'b GraphBatch) -> &'b EdgeIndex {
        if self.self_loop {
            batch.looped_edges()
        } else {
            batch.edges()
        }
    }

    /// Joint attention per edge of [`Self::edges`] (E×1) and the stacked
    /// per-relation projections `[zW_1 | zW_2 | …]`.
    pub fn attention(&self, tape: &mut Tape, params: &Bound, batch: &GraphBatch, z: Var) -> Result<(Var, Var)> {
        check_input(tape, z, "rgat", self.input)?;
        check_relations(batch, self.relation_count())?;
        let weights: Vec<Var> = self.heads.iter().map(|h| params.var(h.weight)).collect();
        let w = tape.concat_cols(&weights)?;
        let h = tape.matmul(z, w)?;
        let (mut sq, mut sk) = (Vec::new(), Vec::new());
        for (r, head) in self.heads.iter().enumerate() {
            let hr = tape.slice_cols(h, r * self.output, self.output)?;
            sq.push(tape.matmul(hr, params.var(head.query))?);
            sk.push(tape.matmul(hr, params.var(head.key))?);
        }
        let sq = tape.concat_cols(&sq)?;
        let sk = tape.concat_cols(&sk)?;
        let edges = self.edges(batch);
        let qi = tape.gather_rows(sq, edges.dst.clone())?;
        let qi = tape.pick_cols(qi, edges.rel.clone())?;
        let kj = tape.gather_rows(sk, edges.src.clone())?;
        let kj = tape.pick_cols(kj, edges.rel.clone())?;
        let logits = tape.add(qi, kj)?;
        let logits = tape.leaky_relu(logits, LEAKY_SLOPE);
        let alpha = tape.segment_softmax(logits, edges.dst.clone(), batch.node_count())?;
        Ok((alpha, h))
    }
}

impl GraphLayer for RgatLayer {
    fn kind(&self) -> &'static str {
        "rgat"
    }

    fn input_width(&self) -> usize {
        self.input
    }

    fn output_width(&self) -> usize {
        self.output
    }

    fn forward(&self, tape: &mut Tape, params: &Bound, batch: &GraphBatch, z: Var) -> Result<Var> {
        let (alpha, h) = self.attention(tape, params, batch, z)?;
        let edges = self.edges(batch);
        let terms: Rc<[MixTerm]> = (0..edges.len())
            .map(|e| MixTerm {
                dst: e as u32,
                src: edges.src[e] as u32,
                block: edges.rel[e] as u32,
                coef: 1.0,
            })
            .collect();
        let messages = tape.block_mix(h, terms, self.output, edges.len())?;
        let weighted = tape.mul_col(messages, alpha)?;
        let summed = tape.scatter_add_rows(weighted, edges.dst.clone(), batch.node_count())?;
        Ok(self.activation.apply(tape, summed))
    }
}
