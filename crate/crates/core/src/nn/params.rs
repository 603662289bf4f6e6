use std::collections::{BTreeMap, HashMap};

use super::{NnError, Result, SeededRng, Tensor};

#[derive(Debug, Clone, PartialEq)]
struct ParamEntry {
    value: Tensor,
    grad: Tensor,
}

/// Named parameters with gradient accumulators, iterated in lexicographic
/// name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        let grad = Tensor::zeros(value.shape().to_vec())?;
        self.entries.insert(name, ParamEntry { value, grad });
        Ok(())
    }

    /// Uniform(-bound, bound) initialisation.
    pub fn add_uniform(&mut self, name: &str, shape: Vec<usize>, bound: f64, rng: &mut SeededRng) -> Result<()> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(-bound, bound) as f32).collect();
        self.insert(name, Tensor::new(shape, data)?)
    }

    /// Xavier-uniform for a `rows x cols` matrix.
    pub fn add_xavier(&mut self, name: &str, rows: usize, cols: usize, rng: &mut SeededRng) -> Result<()> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        self.add_uniform(name, vec![rows, cols], bound, rng)
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<()> {
        self.insert(name, Tensor::zeros(shape)?)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.grad)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub(crate) fn iter_mut_with_grad(&mut self) -> impl Iterator<Item = (&str, &mut Tensor, &mut Tensor)> {
        self.entries
            .iter_mut()
            .map(|(k, e)| (k.as_str(), &mut e.value, &mut e.grad))
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds `scale * grads` into the accumulators.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) -> Result<()> {
        for (name, g) in grads.iter() {
            let entry = self
                .entries
                .get_mut(name)
                .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
            if entry.grad.len() != g.len() {
                return Err(NnError::Dimension(format!("gradient for `{name}` has wrong length")));
            }
            for (acc, v) in entry.grad.data_mut().iter_mut().zip(g) {
                *acc = (f64::from(*acc) + scale * v) as f32;
            }
        }
        Ok(())
    }

    /// Copies every parameter present in `other` into `self` (shapes must agree).
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, value) in other.iter() {
            let dst = self.get_mut(name)?;
            if dst.shape() != value.shape() {
                return Err(NnError::Dimension(format!("shape mismatch copying `{name}`")));
            }
            *dst = value.clone();
        }
        Ok(())
    }

    pub fn view(&self) -> ParamView {
        let mut view = ParamView::default();
        for (name, e) in &self.entries {
            let (r, c) = e.value.dims2();
            view.index.insert(name.clone(), view.names.len());
            view.names.push(name.clone());
            view.dims.push((r, c));
            view.values.push(e.value.data().iter().map(|&v| f64::from(v)).collect());
        }
        view
    }
}

/// Immutable `f64` snapshot of a [`ParamStore`] read by the autodiff graph.
#[derive(Debug, Clone, Default)]
pub struct ParamView {
    names: Vec<String>,
    dims: Vec<(usize, usize)>,
    values: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl ParamView {
    pub(crate) fn lookup(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub(crate) fn value(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub(crate) fn dims(&self, idx: usize) -> (usize, usize) {
        self.dims[idx]
    }

    pub(crate) fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub(crate) fn len(&self) -> usize {
        self.names.len()
    }
}

/// Per-parameter gradients in `f64`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    by_name: BTreeMap<String, Vec<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Vec<f64>) {
        self.by_name.insert(name.into(), grad);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.by_name.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (name, g) in other.iter() {
            let dst = self
                .by_name
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; g.len()]);
            for (d, v) in dst.iter_mut().zip(g) {
                *d += scale * v;
            }
        }
    }

    pub fn is_finite(&self) -> Option<&str> {
        self.by_name
            .iter()
            .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
            .map(|(k, _)| k.as_str())
    }
}
