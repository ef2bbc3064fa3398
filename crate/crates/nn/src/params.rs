use std::collections::BTreeMap;

use kcdm_core::numerics::{Real, RngStream};
use kcdm_core::{Error, Result};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named complex parameters in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
    index: BTreeMap<String, ParamId>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    /// Registers a tensor under a unique name.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("parameter {name} registered twice")));
        }
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(value);
        Ok(id)
    }

    /// Registers a weight drawn uniformly from `±1/√(2·fan_in)` on both parts.
    pub fn add_uniform(&mut self, name: impl Into<String>, dims: &[usize], fan_in: usize, rng: &mut RngStream) -> Result<ParamId> {
        let bound = 1.0 / ((2 * fan_in.max(1)) as f64).sqrt();
        let mut t = Tensor::zeros(dims);
        for v in t.re.iter_mut().chain(t.im.iter_mut()) {
            *v = F::of(rng.uniform_range(-bound, bound));
        }
        self.add(name, t)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, dims: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(dims))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<F>)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    /// Number of real scalars (two per complex entry).
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| 2 * t.len()).sum()
    }

    /// Replaces values by name. Every stored parameter must be present with
    /// an identical shape.
    pub fn load_from(&mut self, named: &[(String, Tensor<F>)]) -> Result<()> {
        let lookup: BTreeMap<&str, &Tensor<F>> = named.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for (i, name) in self.names.iter().enumerate() {
            let src = lookup
                .get(name.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks parameter {name}")))?;
            if src.dims() != self.tensors[i].dims() {
                return Err(Error::shape(
                    format!("{name} with dims {:?}", self.tensors[i].dims()),
                    src.dims(),
                ));
            }
            self.tensors[i] = (*src).clone();
        }
        Ok(())
    }

    pub fn named(&self) -> Vec<(String, Tensor<F>)> {
        self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Gradient accumulator aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub tensors: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Grads<F> {
    pub fn new(n: usize) -> Self {
        Grads {
            tensors: vec![None; n],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<F>> {
        self.tensors.get(id.0).and_then(Option::as_ref)
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor<F>) {
        match &mut self.tensors[id.0] {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    /// Adds `other` entry by entry.
    pub fn merge(&mut self, other: &Grads<F>) {
        for (i, g) in other.tensors.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for t in self.tensors.iter_mut().flatten() {
            t.scale_real(s);
        }
    }

    /// Euclidean norm over all real coordinates.
    pub fn norm(&self) -> f64 {
        self.tensors.iter().flatten().map(|t| t.energy()).sum::<f64>().sqrt()
    }

    /// Sums per-sample gradients in index order, so the result does not
    /// depend on how the samples were scheduled.
    pub fn sum_ordered(n: usize, parts: &[Grads<F>]) -> Grads<F> {
        let mut total = Grads::new(n);
        for p in parts {
            total.merge(p);
        }
        total
    }
}
