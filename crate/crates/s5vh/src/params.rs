//! Named parameter storage shared by the model layers, optimizer and
//! checkpoint code.
//!
//! Layers hold [`ParamId`] handles; per step the store lifts every parameter
//! onto a fresh tape as leaf tensors (or plain constants for inference), and
//! the optimizer writes updated values back through `data_mut`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

struct ParamEntry<S: Scalar> {
    name: String,
    shape: Vec<usize>,
    data: Vec<S>,
}

pub struct ParamStore<S: Scalar> {
    entries: Vec<ParamEntry<S>>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> ParamStore<S> {
        ParamStore {
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<S>) -> ParamId {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}");
        debug_assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry { name, shape, data });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    pub fn data(&self, id: ParamId) -> &[S] {
        &self.entries[id.0].data
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut [S] {
        &mut self.entries[id.0].data
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize], &[S])> {
        self.entries
            .iter()
            .map(|e| (e.name.as_str(), e.shape.as_slice(), e.data.as_slice()))
    }

    /// Lift every parameter as a tensor: tape leaves when `tape` is given,
    /// constants otherwise.
    pub fn lift(&self, tape: Option<&Tape<S>>) -> Result<Lifted<S>> {
        let tensors = self
            .entries
            .iter()
            .map(|e| match tape {
                Some(tape) => Tensor::leaf(tape, e.data.clone(), e.shape.clone()),
                None => Tensor::constant(e.data.clone(), e.shape.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Lifted { tensors })
    }

    /// Restore values by name from a checkpoint listing. Every entry in
    /// `named` must match an existing parameter's name and shape; parameters
    /// absent from `named` keep their current values.
    pub fn load_named(&mut self, named: &[(String, Vec<usize>, Vec<S>)]) -> Result<usize> {
        let mut loaded = 0;
        for (name, shape, data) in named {
            let Some(entry) = self.entries.iter_mut().find(|e| &e.name == name) else {
                return Err(Error::Config(format!(
                    "checkpoint tensor `{name}` has no matching model parameter"
                )));
            };
            if &entry.shape != shape {
                return Err(Error::Config(format!(
                    "checkpoint tensor `{name}` shape {shape:?} does not match model {:?}",
                    entry.shape
                )));
            }
            entry.data = data.clone();
            loaded += 1;
        }
        Ok(loaded)
    }

    /// Copy of all parameter buffers, for best-epoch snapshots.
    pub fn snapshot(&self) -> Vec<Vec<S>> {
        self.entries.iter().map(|e| e.data.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<S>]) {
        assert_eq!(snapshot.len(), self.entries.len());
        for (entry, snap) in self.entries.iter_mut().zip(snapshot) {
            entry.data.copy_from_slice(snap);
        }
    }
}

/// Parameters lifted as tensors for one forward/backward pass.
pub struct Lifted<S: Scalar> {
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> Lifted<S> {
    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }
}
