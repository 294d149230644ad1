use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Index into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub(crate) fn push(&mut self, name: String, value: Tensor) -> ParamId {
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.values[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|t| t.data().len()).sum()
    }

    /// Puts every tensor on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Replaces values with those of `other`, matching by name and shape.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.names.len() != self.names.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameter tensors, model expects {}",
                other.names.len(),
                self.names.len()
            )));
        }
        for (name, value) in other.names.iter().zip(&other.values) {
            let slot = self
                .by_name_mut(name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter {name}")))?;
            if slot.shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: shape {:?} does not match model shape {:?}",
                    value.shape(),
                    slot.shape()
                )));
            }
            *slot = value.clone();
        }
        Ok(())
    }
}

/// Weight matrix `fan_in × fan_out` plus optional `1 × fan_out` bias.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

pub(crate) struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn dense(
        &mut self,
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Dense {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| self.rng.gen_range(-limit..limit))
            .collect();
        let w = store.push(
            format!("{name}.w"),
            Tensor::from_vec(fan_in, fan_out, data).expect("sized"),
        );
        let b = bias.then(|| store.push(format!("{name}.b"), Tensor::zeros(1, fan_out)));
        Dense { w, b }
    }
}
