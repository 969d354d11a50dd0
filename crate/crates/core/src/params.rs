//! Declarative parameter layouts shared by fresh initialisation and
//! checkpoint binding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Init {
    Xavier {
        fan_in: usize,
        fan_out: usize,
    },
    Zeros,
    /// Uniform rows, padding row (id 0) zero.
    Embedding,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn xavier(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            shape: vec![rows, cols],
            init: Init::Xavier {
                fan_in: rows,
                fan_out: cols,
            },
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init: Init::Zeros,
        }
    }

    pub fn materialize<R: Rng>(&self, rng: &mut R) -> Tensor {
        match self.init {
            Init::Xavier { fan_in, fan_out } => Tensor::xavier(&self.shape, fan_in, fan_out, rng),
            Init::Zeros => Tensor::zeros(&self.shape),
            Init::Embedding => {
                let dim = self.shape[1];
                let mut t = Tensor::xavier(&self.shape, 1, dim, rng);
                t.data_mut()[..dim].fill(0.0);
                t
            }
        }
    }
}

pub(crate) fn register<R: Rng>(
    specs: &[ParamSpec],
    params: &mut ParamStore,
    rng: &mut R,
) -> Result<Vec<ParamId>> {
    specs
        .iter()
        .map(|s| params.add(s.name.clone(), s.materialize(rng)))
        .collect()
}

/// Looks every spec up by name and checks its shape.
pub(crate) fn bind(specs: &[ParamSpec], params: &ParamStore) -> Result<Vec<ParamId>> {
    specs
        .iter()
        .map(|s| {
            let id = params
                .id(&s.name)
                .ok_or_else(|| Error::Config(format!("missing parameter {}", s.name)))?;
            let found = params.get(id).shape();
            if found != s.shape.as_slice() {
                return Err(Error::Shape {
                    op: "bind",
                    lhs: s.shape.clone(),
                    rhs: found.to_vec(),
                });
            }
            Ok(id)
        })
        .collect()
}
