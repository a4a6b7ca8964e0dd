//! Dense layers over a [`ParamSet`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::Matrix;
use crate::params::{Bound, ParamId, ParamSet};
use crate::tape::{Tape, Var};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Uniform in ±√(1/fan_in).
pub fn init_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    Matrix::uniform(fan_in, fan_out, bound, rng)
}

/// `x·W + b` with W stored as in×out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), init_uniform(input, output, rng));
        let bias = bias.then(|| {
            let bound = (1.0 / input.max(1) as f64).sqrt();
            params.add(format!("{name}.bias"), Matrix::uniform(1, output, bound, rng))
        });
        Self {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, bound.var(self.weight))?;
        match self.bias {
            Some(b) => tape.add_row(y, bound.var(b)),
            None => Ok(y),
        }
    }
}

/// Stack of dense layers with LeakyReLU between them (none after the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `widths` lists input, hidden and output widths, e.g. `[in, 128, 128, out]`.
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, widths: &[usize], rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(params, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, bound, h)?;
            if i < last {
                h = tape.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        Ok(h)
    }
}
