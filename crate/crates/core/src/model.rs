//! Critic and policy networks, and the observation views they consume.

use marc_gnn::{observation_graph, Encoder, EncoderConfig, EntitySource, GraphBatch};
use marc_relgraph::{relation_preset, ObservationSchema, RelationOptions, RelationSet, RelationalGraph};
use marc_tensor::nn::{Mlp, LEAKY_SLOPE};
use marc_tensor::{Bound, Matrix, ParamSet, Tape, Var};
use rand::{Rng, RngCore};

use crate::error::{CoreError, Result};

/// Turns raw observations into critic graphs and policy inputs.
#[derive(Debug, Clone)]
pub struct ObservationView {
    pub schema: ObservationSchema,
    pub relations: RelationSet,
    pub entities: EntitySource,
    /// Policy input width, fixed by the training environment.
    pub policy_width: usize,
}

impl ObservationView {
    pub fn new(
        schema: ObservationSchema,
        preset: &str,
        options: &RelationOptions,
        entities: EntitySource,
        policy_width: usize,
    ) -> Result<Self> {
        Ok(Self {
            relations: relation_preset(preset, options)?,
            schema,
            entities,
            policy_width,
        })
    }

    pub fn relation_names(&self) -> Vec<String> {
        self.relations.names().into_iter().map(String::from).collect()
    }

    pub fn node_width(&self) -> usize {
        self.entities.feature_width(&self.schema)
    }

    pub fn graph(&self, observation: &[f64]) -> Result<RelationalGraph> {
        Ok(observation_graph(observation, &self.schema, &self.relations, self.entities)?)
    }

    /// Disjoint union of the graphs of `observations`, in order.
    pub fn batch<'a>(&self, observations: impl IntoIterator<Item = &'a [f64]>) -> Result<GraphBatch> {
        let mut b = GraphBatch::builder(self.node_width(), self.relations.len());
        for obs in observations {
            b.push(&self.graph(obs)?, &self.schema.domain)?;
        }
        Ok(b.finish()?)
    }

    /// The raw observation with every entity position mapped into `[0, 1]²`,
    /// zero-padded or truncated to the policy width.
    pub fn policy_input(&self, observation: &[f64]) -> Vec<f64> {
        let w = self.schema.block_width();
        let mut out = Vec::with_capacity(self.policy_width);
        for block in observation.chunks(w) {
            if block.len() == w {
                let p = self.schema.domain.normalize(marc_relgraph::Point::new(block[0], block[1]));
                out.extend([p.x, p.y]);
                out.extend_from_slice(&block[2..]);
            } else {
                out.extend_from_slice(block);
            }
        }
        out.resize(self.policy_width, 0.0);
        out
    }
}

/// Per-agent Q-vector heads over one shared observation encoder. All
/// parameters live in a single [`ParamSet`]; the encoder's are stored once.
#[derive(Debug)]
pub struct Critic {
    pub encoder: Encoder,
    pub heads: Vec<Mlp>,
    pub action_counts: Vec<usize>,
}

impl Critic {
    pub fn new(
        config: &EncoderConfig,
        view: &ObservationView,
        action_counts: &[usize],
        hidden: usize,
        params: &mut ParamSet,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let encoder = Encoder::new(config, view.node_width(), &view.relation_names(), params, rng)?;
        let e = encoder.output_width();
        let total: usize = action_counts.iter().sum();
        let heads = action_counts
            .iter()
            .enumerate()
            .map(|(i, &n)| Mlp::new(params, &format!("critic.{i}"), &[e + total - n, hidden, n], rng))
            .collect();
        Ok(Self {
            encoder,
            heads,
            action_counts: action_counts.to_vec(),
        })
    }

    pub fn agent_count(&self) -> usize {
        self.heads.len()
    }

    /// Width of the one-hot block of everyone but agent `i`.
    pub fn others_width(&self, i: usize) -> usize {
        self.action_counts.iter().sum::<usize>() - self.action_counts[i]
    }

    /// One-hot actions of every agent except `i`, one row per joint action.
    pub fn others_one_hot(&self, i: usize, joint: &[&[usize]]) -> Matrix {
        let w = self.others_width(i);
        let mut m = Matrix::zeros(joint.len(), w);
        for (r, actions) in joint.iter().enumerate() {
            let mut base = 0;
            for (j, &a) in actions.iter().enumerate() {
                if j != i {
                    m.set(r, base + a, 1.0);
                    base += self.action_counts[j];
                }
            }
        }
        m
    }

    /// Q-vectors for every agent. `batch` holds `n·B` graphs ordered
    /// agent-major (agent i owns graphs `i·B..(i+1)·B`); `others[i]` is the
    /// B-row one-hot block for agent i.
    pub fn q_values(&self, tape: &mut Tape, bound: &Bound, batch: &GraphBatch, others: &[Matrix]) -> Result<Vec<Var>> {
        let n = self.agent_count();
        if others.len() != n {
            return Err(CoreError::Arity {
                agent: 0,
                got: others.len(),
                expected: n,
            });
        }
        let rows = batch.graph_count() / n;
        let e = self.encoder.forward(tape, bound, batch)?;
        (0..n)
            .map(|i| {
                if others[i].cols() != self.others_width(i) || others[i].rows() != rows {
                    return Err(CoreError::Arity {
                        agent: i,
                        got: others[i].cols(),
                        expected: self.others_width(i),
                    });
                }
                let ei = tape.slice_rows(e, i * rows, rows)?;
                let oh = tape.constant(others[i].clone());
                let x = tape.concat_cols(&[ei, oh])?;
                Ok(self.heads[i].forward(tape, bound, x)?)
            })
            .collect()
    }

    /// Q-vector of agent `i` for one observation. `others` lists the
    /// one-hot action vectors of the other agents in index order.
    pub fn forward_one(
        &self,
        params: &ParamSet,
        view: &ObservationView,
        agent: usize,
        observation: &[f64],
        others: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let n = self.agent_count();
        let widths: Vec<usize> = (0..n).filter(|&j| j != agent).map(|j| self.action_counts[j]).collect();
        if others.len() != widths.len() || others.iter().zip(&widths).any(|(v, &w)| v.len() != w) {
            return Err(CoreError::Arity {
                agent,
                got: others.len(),
                expected: widths.len(),
            });
        }
        let batch = view.batch([observation])?;
        let mut tape = Tape::new();
        let bound = params.bind_frozen(&mut tape);
        let e = self.encoder.forward(&mut tape, &bound, &batch)?;
        let oh = tape.constant(Matrix::row_vector(&others.concat()));
        let x = tape.concat_cols(&[e, oh])?;
        let q = self.heads[agent].forward(&mut tape, &bound, x)?;
        Ok(tape.value(q).as_slice().to_vec())
    }
}

/// Independent per-agent categorical policies over the flattened raw
/// observation, in one [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Policies {
    pub nets: Vec<Mlp>,
    pub input_width: usize,
}

impl Policies {
    pub fn new(
        input_width: usize,
        action_counts: &[usize],
        hidden: usize,
        params: &mut ParamSet,
        rng: &mut dyn RngCore,
    ) -> Self {
        let nets = action_counts
            .iter()
            .enumerate()
            .map(|(i, &n)| Mlp::new(params, &format!("policy.{i}"), &[input_width, hidden, hidden, n], rng))
            .collect();
        Self { nets, input_width }
    }

    pub fn agent_count(&self) -> usize {
        self.nets.len()
    }

    /// Logits on the tape for a B×input matrix.
    pub fn logits(&self, tape: &mut Tape, bound: &Bound, agent: usize, inputs: Var) -> Result<Var> {
        Ok(self.nets[agent].forward(tape, bound, inputs)?)
    }

    /// Action probabilities and their logarithms without recording, one
    /// row per input row.
    pub fn distribution(&self, params: &ParamSet, agent: usize, inputs: &Matrix) -> Result<(Matrix, Matrix)> {
        let net = &self.nets[agent];
        let last = net.layers.len() - 1;
        let mut h = inputs.clone();
        for (k, layer) in net.layers.iter().enumerate() {
            h = h.matmul(params.get(layer.weight))?;
            if let Some(b) = layer.bias {
                let b = params.get(b);
                for r in 0..h.rows() {
                    h.row_mut(r).iter_mut().zip(b.as_slice()).for_each(|(v, bv)| *v += bv);
                }
            }
            if k < last {
                h = h.map(|v| if v >= 0.0 { v } else { LEAKY_SLOPE * v });
            }
        }
        for r in 0..h.rows() {
            log_softmax_in_place(h.row_mut(r));
        }
        let probs = h.map(f64::exp);
        check_distribution(&probs)?;
        Ok((probs, h))
    }

    pub fn probabilities(&self, params: &ParamSet, agent: usize, inputs: &Matrix) -> Result<Matrix> {
        Ok(self.distribution(params, agent, inputs)?.0)
    }
}

fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter_mut().for_each(|v| *v -= lse);
}

/// Rejects rows that are not probability vectors.
pub fn check_distribution(probs: &Matrix) -> Result<()> {
    for r in 0..probs.rows() {
        let row = probs.row(r);
        let total: f64 = row.iter().sum();
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) || !(total > 0.0) {
            return Err(CoreError::NonFinite {
                what: "policy distribution",
                detail: format!("row {r} is {row:?}"),
            });
        }
    }
    Ok(())
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
        .0
}
