use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::matrix::Matrix;
use crate::tape::{Gradients, Tape, Var};

/// Index of a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Registers every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.values.iter().map(|m| tape.leaf(m.clone())).collect(),
        }
    }

    /// Registers every parameter as a constant (no gradient flows back).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.values.iter().map(|m| tape.constant(m.clone())).collect(),
        }
    }

    /// Checks names and shapes agree with `other`.
    pub fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            let diff = self
                .names
                .iter()
                .zip(&other.names)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("{a} vs {b}"))
                .unwrap_or_else(|| format!("{} vs {} parameters", self.len(), other.len()));
            return Err(TensorError::Invalid {
                op: "check_compatible",
                detail: diff,
            });
        }
        for (i, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            if a.shape() != b.shape() {
                return Err(TensorError::Invalid {
                    op: "check_compatible",
                    detail: format!("{}: {:?} vs {:?}", self.names[i], a.shape(), b.shape()),
                });
            }
        }
        Ok(())
    }

    /// Polyak averaging toward `online`: `self ← (1 − tau)·self + tau·online`.
    pub fn soft_update_from(&mut self, online: &ParamSet, tau: f64) -> Result<()> {
        self.check_compatible(online)?;
        for (t, o) in self.values.iter_mut().zip(&online.values) {
            for (tv, ov) in t.as_mut_slice().iter_mut().zip(o.as_slice()) {
                *tv = (1.0 - tau) * *tv + tau * ov;
            }
        }
        Ok(())
    }

    /// Euclidean distance between two compatible sets.
    pub fn distance(&self, other: &ParamSet) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.as_slice().iter().zip(b.as_slice()))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    /// Order-sensitive fingerprint of every bit of every value.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bits
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for m in &self.values {
            for v in m.as_slice() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Tape handles for a [`ParamSet`], indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients for every bound parameter, in [`ParamSet`] order.
    pub fn gradients(&self, tape: &Tape, grads: &mut Gradients) -> Result<Vec<Matrix>> {
        self.vars.iter().map(|&v| grads.take(tape, v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_update_extremes() {
        let mut target = ParamSet::new();
        target.add("w", Matrix::filled(2, 2, 1.0));
        let mut online = ParamSet::new();
        online.add("w", Matrix::filled(2, 2, 3.0));

        let mut t0 = target.clone();
        t0.soft_update_from(&online, 0.0).unwrap();
        assert_eq!(t0, target);

        let mut t1 = target.clone();
        t1.soft_update_from(&online, 1.0).unwrap();
        assert_eq!(t1, online);
    }

    #[test]
    fn incompatible_sets_are_rejected() {
        let mut a = ParamSet::new();
        a.add("w", Matrix::zeros(2, 2));
        let mut b = ParamSet::new();
        b.add("w", Matrix::zeros(2, 3));
        assert!(a.soft_update_from(&b, 0.5).is_err());
        let mut c = ParamSet::new();
        c.add("v", Matrix::zeros(2, 2));
        let err = a.check_compatible(&c).unwrap_err().to_string();
        assert!(err.contains("w vs v"), "{err}");
    }
}
