//! Neural building blocks: named parameters, layers, a gated recurrent
//! cell, AdamW with linear warm-up, and the checkpoint container.
//!
//! Parameters live outside any tape in a [`ParamStore`]. Each forward pass
//! binds the store onto a fresh tape ([`ParamStore::bind`]), which creates
//! one leaf per parameter; after `backward`, [`ParamStore::take_grads`]
//! copies the leaf gradients back into the store for the optimizer.

mod adam;
mod checkpoint;
mod layers;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, ParamEntry};
pub use layers::{
    decode_autoregressive, decode_nll_batch, encode_batch, encode_sequence, greedy_decode,
    Embedding, GruCell, Linear,
};

use crate::error::{CoreError, Result};
use crate::tensor::{Tape, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Named, optimizable parameter arrays. Creation order is the canonical
/// order for initialisation, optimisation, and serialisation.
#[derive(Debug, Default, Clone)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let grad = vec![0.0; data.len()];
        self.params.push(Parameter {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    /// Weight-matrix initialisation: uniform(−1/√fan_in, +1/√fan_in).
    pub fn add_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                (2.0 * u - 1.0) * bound
            })
            .collect();
        self.add(name, shape, data)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let n: usize = shape.iter().product();
        self.add(name, shape, vec![0.0; n])
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Leaf every parameter onto `tape`. The returned binding maps
    /// [`ParamId`]s to tape handles for this pass.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                tape.leaf(&p.shape, p.data.clone(), true)
                    .expect("stored parameter shapes are valid")
            })
            .collect();
        Bound { vars }
    }

    /// Bind with gradients disabled, for frozen use of the parameters.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                tape.leaf(&p.shape, p.data.clone(), false)
                    .expect("stored parameter shapes are valid")
            })
            .collect();
        Bound { vars }
    }

    /// Accumulate the bound leaves' gradients into the store.
    pub fn take_grads(&mut self, tape: &Tape, bound: &Bound) -> Result<()> {
        for (param, &var) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(g) = tape.grad(var) {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(CoreError::Numeric(format!(
                        "non-finite gradient for parameter {}",
                        param.name
                    )));
                }
                for (pg, &gv) in param.grad.iter_mut().zip(g) {
                    *pg += gv;
                }
            }
        }
        Ok(())
    }
}

/// Tape handles for one forward pass over a [`ParamStore`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Inverted dropout on a tape tensor; scales kept entries by 1/(1−rate).
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - rate;
    let shape = tape.shape(x).to_vec();
    let mask: Vec<f64> = (0..tape.data(x).len())
        .map(|_| {
            let u: f64 = rng.random();
            if u < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    let m = tape.constant(&shape, mask)?;
    tape.mul(x, m)
}
