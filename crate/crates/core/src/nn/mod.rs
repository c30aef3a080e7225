//! Parameter storage, initialization, recurrent cells and optimization shared by
//! the three model families.

mod checkpoint;
mod layers;
mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{Embedding, GruCell, Linear, LstmCell, RecurrentState};
pub use optim::{adam_update, clip_gradients, global_norm, minimize, AdamConfig, Grads, TrainSettings};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("training error: non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },
    #[error("training error: {0}")]
    Training(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters with their Adam moments and a global step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    index: BTreeMap<String, usize>,
    step: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            first: Vec::new(),
            second: Vec::new(),
            index: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(NnError::Config(format!("duplicate parameter name {name}")));
        }
        let id = self.values.len();
        self.first.push(Tensor::zeros(value.shape()));
        self.second.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Result<&Tensor> {
        Ok(self.get(self.id(name)?))
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Records the parameter on the tape once per tape.
    pub fn var(&self, tape: &Tape, id: ParamId) -> Var {
        tape.tagged_leaf(id.0, || self.values[id.0].clone())
    }

    /// Overwrites values from `(name, tensor)` records. Every parameter must be
    /// present with a matching shape; extra records are an error.
    pub fn load(&mut self, records: &[(String, Tensor)]) -> Result<()> {
        if records.len() != self.len() {
            return Err(NnError::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.len(),
                records.len()
            )));
        }
        for (name, value) in records {
            let id = self.id(name)?;
            if self.values[id.0].shape() != value.shape() {
                return Err(NnError::Checkpoint(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    self.values[id.0].shape(),
                    value.shape()
                )));
            }
            self.values[id.0] = value.clone();
        }
        Ok(())
    }

    pub fn records(&self) -> Vec<(String, Tensor)> {
        self.names.iter().cloned().zip(self.values.iter().cloned()).collect()
    }
}

/// Layer shapes understood by [`init_params`].
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// `name.w` `[output × input]`, `name.b` `[output]`.
    Linear { name: String, input: usize, output: usize },
    /// `name.table` `[vocab × dim]`.
    Embedding { name: String, vocab: usize, dim: usize },
    /// `name.w` `[4H × (D+H)]` with gate order input, forget, cell, output;
    /// `name.b` `[4H]` with the forget slice set to 1.
    Lstm { name: String, input: usize, hidden: usize },
    /// `name.wx` `[3H × D]`, `name.wh` `[2H × H]`, `name.wn` `[H × H]`, `name.b` `[3H]`.
    Gru { name: String, input: usize, hidden: usize },
    /// Free Glorot-initialised matrix.
    Matrix { name: String, rows: usize, cols: usize },
    /// Free zero-initialised vector.
    Vector { name: String, len: usize },
    /// Free vector drawn uniformly from the Glorot range of a `[len × 1]` matrix.
    UniformVector { name: String, len: usize },
}

impl LayerSpec {
    pub fn linear(name: &str, input: usize, output: usize) -> Self {
        LayerSpec::Linear { name: name.into(), input, output }
    }
    pub fn embedding(name: &str, vocab: usize, dim: usize) -> Self {
        LayerSpec::Embedding { name: name.into(), vocab, dim }
    }
    pub fn lstm(name: &str, input: usize, hidden: usize) -> Self {
        LayerSpec::Lstm { name: name.into(), input, hidden }
    }
    pub fn gru(name: &str, input: usize, hidden: usize) -> Self {
        LayerSpec::Gru { name: name.into(), input, hidden }
    }
    pub fn matrix(name: &str, rows: usize, cols: usize) -> Self {
        LayerSpec::Matrix { name: name.into(), rows, cols }
    }
    pub fn vector(name: &str, len: usize) -> Self {
        LayerSpec::Vector { name: name.into(), len }
    }
    pub fn uniform_vector(name: &str, len: usize) -> Self {
        LayerSpec::UniformVector { name: name.into(), len }
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            LayerSpec::Linear { input, output, .. } => vec![*input, *output],
            LayerSpec::Embedding { vocab, dim, .. } => vec![*vocab, *dim],
            LayerSpec::Lstm { input, hidden, .. } | LayerSpec::Gru { input, hidden, .. } => {
                vec![*input, *hidden]
            }
            LayerSpec::Matrix { rows, cols, .. } => vec![*rows, *cols],
            LayerSpec::Vector { len, .. } | LayerSpec::UniformVector { len, .. } => vec![*len],
        }
    }

    fn name(&self) -> &str {
        match self {
            LayerSpec::Linear { name, .. }
            | LayerSpec::Embedding { name, .. }
            | LayerSpec::Lstm { name, .. }
            | LayerSpec::Gru { name, .. }
            | LayerSpec::Matrix { name, .. }
            | LayerSpec::Vector { name, .. }
            | LayerSpec::UniformVector { name, .. } => name,
        }
    }
}

/// Half-width of the Glorot uniform range.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = glorot_limit(fan_in, fan_out);
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("glorot shape")
}

/// Builds a parameter store for the given layers. Weights are Glorot-uniform,
/// biases zero, LSTM forget-gate biases one. Deterministic in `seed`.
pub fn init_params(specs: &[LayerSpec], seed: u64) -> Result<ParamStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for spec in specs {
        if spec.dims().contains(&0) {
            return Err(NnError::Config(format!("layer {} has a zero dimension", spec.name())));
        }
        let n = spec.name();
        match *spec {
            LayerSpec::Linear { input, output, .. } => {
                store.insert(&format!("{n}.w"), glorot(&mut rng, output, input, input, output))?;
                store.insert(&format!("{n}.b"), Tensor::zeros(&[output]))?;
            }
            LayerSpec::Embedding { vocab, dim, .. } => {
                store.insert(&format!("{n}.table"), glorot(&mut rng, vocab, dim, vocab, dim))?;
            }
            LayerSpec::Lstm { input, hidden, .. } => {
                let cols = input + hidden;
                store.insert(&format!("{n}.w"), glorot(&mut rng, 4 * hidden, cols, cols, hidden))?;
                let mut b = Tensor::zeros(&[4 * hidden]);
                b.data_mut()[hidden..2 * hidden].fill(1.0);
                store.insert(&format!("{n}.b"), b)?;
            }
            LayerSpec::Gru { input, hidden, .. } => {
                store.insert(&format!("{n}.wx"), glorot(&mut rng, 3 * hidden, input, input, hidden))?;
                store.insert(&format!("{n}.wh"), glorot(&mut rng, 2 * hidden, hidden, hidden, hidden))?;
                store.insert(&format!("{n}.wn"), glorot(&mut rng, hidden, hidden, hidden, hidden))?;
                store.insert(&format!("{n}.b"), Tensor::zeros(&[3 * hidden]))?;
            }
            LayerSpec::Matrix { rows, cols, .. } => {
                store.insert(n, glorot(&mut rng, rows, cols, cols, rows))?;
            }
            LayerSpec::Vector { len, .. } => {
                store.insert(n, Tensor::zeros(&[len]))?;
            }
            LayerSpec::UniformVector { len, .. } => {
                store.insert(n, Tensor::vector(glorot(&mut rng, len, 1, len, 1).into_data()))?;
            }
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests;
