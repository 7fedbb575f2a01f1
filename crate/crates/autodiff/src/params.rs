use std::collections::BTreeMap;

use crate::{AutodiffError, Result, Tensor};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named leaf tensors, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(AutodiffError::DuplicateParam(name));
        }
        let id = ParamId(self.values.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Overwrite values from another store with the same names and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for (_, name, value) in other.iter() {
            let own = self
                .id(name)
                .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))?;
            if self.values[own.0].shape() != value.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "load_from",
                    lhs: self.values[own.0].shape().to_vec(),
                    rhs: value.shape().to_vec(),
                });
            }
            self.values[own.0] = value.clone();
        }
        Ok(())
    }
}

/// Gradient slots, one per parameter of the store that produced them.
///
/// Slots are shaped like their parameter; parameters that did not take part
/// in the graph get zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    slots: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            slots: store.values.iter().map(|v| Tensor::zeros(v.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0]
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.slots.iter().enumerate().map(|(i, t)| (ParamId(i), t))
    }

    pub fn global_norm(&self) -> f64 {
        self.slots.iter().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().all(Tensor::all_finite)
    }

    pub fn scale(&mut self, factor: f64) {
        for s in &mut self.slots {
            s.scale_in_place(factor);
        }
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, grad: &Tensor) {
        self.slots[id.0].add_assign(grad);
    }
}
