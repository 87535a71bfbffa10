//! Named parameter storage shared by the model, optimizer, and checkpoints.
//!
//! Parameters live here between batches; each batch binds them onto a fresh
//! [`Tape`] as leaves and harvests the leaf gradients back after the reverse
//! sweep.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tape, Tensor, ValueId};

/// Handle to one named parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

/// Ordered collection of named parameter tensors.
///
/// Insertion order is the canonical order used for checkpoints and
/// optimizer state, so it must be deterministic.
pub struct ParamStore<T: Real> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Registers a tensor under a unique name. Trainability follows the
    /// tensor's `requires_grad` flag.
    pub fn insert(&mut self, name: &str, tensor: Tensor<T>) -> ParamId {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.tensors.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Clears every gradient buffer.
    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.zero_grad();
        }
    }

    /// Total scalar count across trainable parameters.
    pub fn trainable_scalars(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.requires_grad())
            .map(|t| t.numel())
            .sum()
    }

    /// Copies every trainable parameter onto the tape as a gradient leaf.
    /// Frozen parameters are not bound; their values are read directly.
    pub fn bind(&self, tape: &mut Tape<T>) -> ParamBinding {
        let ids = self
            .tensors
            .iter()
            .map(|t| {
                if t.requires_grad() {
                    Some(tape.leaf(t.detached()))
                } else {
                    None
                }
            })
            .collect();
        ParamBinding { ids }
    }

    /// Accumulates tape-leaf gradients back into the stored parameters.
    pub fn harvest(&mut self, tape: &Tape<T>, binding: &ParamBinding) {
        for (slot, tensor) in binding.ids.iter().zip(self.tensors.iter_mut()) {
            if let Some(id) = slot {
                if let Some(g) = tape.grad(*id) {
                    tensor.accumulate_grad(g);
                }
            }
        }
    }

    /// Overwrites a parameter's values in place, keeping shape and flags.
    pub fn load_values(&mut self, id: ParamId, values: &[T]) -> Result<()> {
        let t = &mut self.tensors[id.0];
        if t.numel() != values.len() {
            return Err(Error::Checkpoint(format!(
                "parameter {} expects {} values, got {}",
                self.names[id.0],
                t.numel(),
                values.len()
            )));
        }
        t.data_mut().copy_from_slice(values);
        Ok(())
    }
}

/// Tape leaf ids for one batch, aligned with the store.
pub struct ParamBinding {
    ids: Vec<Option<ValueId>>,
}

impl ParamBinding {
    /// Leaf id of a bound (trainable) parameter. Panics for frozen ones,
    /// which are never placed on the tape.
    pub fn id(&self, p: ParamId) -> ValueId {
        self.ids[p.0].expect("parameter is frozen and was not bound")
    }

    pub fn try_id(&self, p: ParamId) -> Option<ValueId> {
        self.ids[p.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_and_harvest_accumulates() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let w = store.insert(
            "w",
            Tensor::vector(vec![2.0, 3.0]).with_requires_grad(true),
        );
        let frozen = store.insert("frozen", Tensor::vector(vec![1.0, 1.0]));

        for _ in 0..2 {
            let mut tape = Tape::new();
            let binding = store.bind(&mut tape);
            let wi = binding.id(w);
            let y = tape.mul(wi, wi).unwrap();
            let l = tape.sum(y).unwrap();
            tape.backward(l).unwrap();
            store.harvest(&tape, &binding);
        }
        // d(sum w^2)/dw = 2w, accumulated twice
        assert_eq!(store.get(w).grad().unwrap(), &[8.0, 12.0]);
        assert!(store.get(frozen).grad().is_none());
        store.zero_grad();
        assert!(store.get(w).grad().is_none());
    }

    #[test]
    fn lookup_by_name() {
        let mut store: ParamStore<f32> = ParamStore::new();
        let id = store.insert("layer.w", Tensor::zeros(vec![2, 2]));
        assert_eq!(store.by_name("layer.w"), Some(id));
        assert_eq!(store.by_name("missing"), None);
        assert_eq!(store.name(id), "layer.w");
    }
}
