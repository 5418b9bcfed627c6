use std::ops::Index;

use indexmap::IndexMap;

use crate::error::{Error, Module, Result};

use super::graph::{Graph, Var};
use super::tensor::{Real, Tensor};

/// Named learnable tensors in a fixed insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self { tensors: IndexMap::new() }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Registers every tensor as a gradient-tracking leaf on `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let mut t = t.clone();
                t.grad = None;
                t.requires_grad = true;
                (name.clone(), g.leaf(t))
            })
            .collect();
        Bound { vars }
    }

    /// Registers every tensor as a constant (no gradients tracked).
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| (name.clone(), g.constant(t.clone())))
            .collect();
        Bound { vars }
    }

    /// Gradients of every parameter in store order; zeros where backward
    /// did not reach a parameter.
    pub fn collect_grads(&self, g: &Graph<T>, bound: &Bound) -> Vec<Vec<T>> {
        self.tensors
            .iter()
            .map(|(name, t)| match g.grad(bound[name.as_str()]) {
                Some(grad) => grad.to_vec(),
                None => vec![T::zero(); t.len()],
            })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    pub(crate) fn tensor_at_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        &mut self.tensors[idx]
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name).ok_or_else(|| {
            Error::contract(Module::Numerics, format!("missing parameter `{name}`"))
        })
    }
}

/// Graph handles for a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl Index<&str> for Bound {
    type Output = Var;

    fn index(&self, name: &str) -> &Var {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` was not bound"))
    }
}
