use std::collections::HashMap;

use rand::Rng;

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Fan-in scaling for uniform initialization: weights are drawn from
/// `U(-g/sqrt(fan_in), g/sqrt(fan_in))` with `g = sqrt(3)`, giving unit
/// variance per output under unit-variance inputs.
pub const INIT_GAIN: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) u32);

impl ParamId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Named parameters in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter {name}")));
        }
        let id = ParamId(self.tensors.len() as u32);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(id)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut impl Rng) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.gen_range(-bound..=bound))).collect();
        self.insert(name, Tensor::new(shape, data).expect("shape matches data"))
            .expect("unique parameter name")
    }

    /// `[fan_in, fan_out]` weight with fan-in scaled uniform values.
    pub fn fan_in(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> ParamId {
        self.uniform(name, &[fan_in, fan_out], INIT_GAIN / (fan_in as f64).sqrt(), rng)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.insert(name, Tensor::full(shape, T::of(value)))
            .expect("unique parameter name")
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.index()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.index()]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i as u32), n.as_str(), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len() as u32).map(ParamId)
    }

    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.iter()
            .filter(move |(_, n, _)| n.starts_with(prefix))
            .map(|(id, _, _)| id)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}
