//! Trainable parameters, their pathway tags, and gradient tables.

use crate::autodiff::scalar::Scalar;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Which update pathway a parameter belongs to. Shared parameters receive
/// gradients on every step; hypothesis-tagged parameters only when their
/// hypothesis wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pathway {
    Shared,
    Hypothesis(usize),
}

/// Handle into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct ParamEntry<T> {
    name: String,
    value: Tensor<T>,
    pathway: Pathway,
    trainable: bool,
}

/// Named, pathway-tagged parameter storage, external to any tape so one
/// set of weights can back many forward passes.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    /// Registers a trainable parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, pathway: Pathway) -> Result<ParamId> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::InvalidParameter(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        self.entries.push(ParamEntry { name, value, pathway, trainable: true });
        Ok(ParamId(self.entries.len() - 1))
    }

    /// Marks a parameter as frozen; backward still flows through it but its
    /// gradient-table entry stays zero.
    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn pathway(&self, id: ParamId) -> Pathway {
        self.entries[id.0].pathway
    }

    pub fn trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// Converts every parameter to another precision, keeping names, tags,
    /// and order.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    pathway: e.pathway,
                    trainable: e.trainable,
                })
                .collect(),
        }
    }
}

/// Per-parameter gradients produced by one backward pass; parameters that
/// were masked, frozen, or unreachable hold exact zeros.
#[derive(Debug, Clone)]
pub struct GradTable<T> {
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> GradTable<T> {
    pub(crate) fn from_parts(grads: Vec<Tensor<T>>) -> Self {
        Self { grads }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Adds another table into this one elementwise (for batch averaging).
    pub fn accumulate(&mut self, other: &GradTable<T>) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    /// Scales every gradient in place.
    pub fn scale(&mut self, factor: T) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v = *v * factor;
            }
        }
    }

    /// The L2 norm over all entries jointly.
    pub fn global_norm(&self) -> T {
        let mut acc = T::zero();
        for g in &self.grads {
            for &v in g.data() {
                acc += v * v;
            }
        }
        acc.sqrt()
    }
}
