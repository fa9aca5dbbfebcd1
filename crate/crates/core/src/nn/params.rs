//! Named parameter storage with deterministic initialization.

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CcsdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Parameters in creation order. Initialization draws from a seeded stream,
/// so building the same model twice with the same seed gives identical weights.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    index: HashMap<String, usize>,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter name {name}");
        let id = self.values.len();
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    /// Glorot-uniform weight of shape `[fan_in, fan_out]`.
    pub fn glorot(&mut self, name: &str, fan_in: usize, fan_out: usize) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let rng = &mut self.rng;
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-bound..=bound));
        self.insert(name, w)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.insert(name, Array2::zeros((rows, cols)))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array2::len).sum()
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Replaces all values from `(name, array)` pairs. Every parameter must be
    /// present with the stored shape.
    pub fn load<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, Array2<f64>)>) -> Result<()> {
        let mut seen = vec![false; self.values.len()];
        for (name, value) in entries {
            let id = *self
                .index
                .get(name)
                .ok_or_else(|| CcsdError::Checkpoint(format!("unknown parameter {name}")))?;
            if value.shape() != self.values[id].shape() {
                return Err(CcsdError::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    self.values[id].shape()
                )));
            }
            self.values[id] = value;
            seen[id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(CcsdError::Checkpoint(format!("parameter {} missing", self.names[missing])));
        }
        Ok(())
    }
}
