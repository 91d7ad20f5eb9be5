use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Index of a parameter inside its [`ParameterSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// How a parameter was initialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    Zeros,
    /// Uniform on `[-bound, bound]`.
    Uniform { bound: f64 },
    /// `exp` of a uniform draw on `[ln lo, ln hi]`.
    LogUniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

#[derive(Clone, Debug)]
struct Entry<T> {
    name: String,
    value: Tensor<T>,
    init: Init,
}

/// Named, ordered collection of trainable tensors.
///
/// Registration order is stable, so a seed fully determines initial values.
#[derive(Clone, Debug)]
pub struct ParameterSet<T> {
    entries: Vec<Entry<T>>,
    by_name: HashMap<String, ParamId>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl<T: Real> ParameterSet<T> {
    pub fn new(seed: u64) -> Self {
        Self { entries: Vec::new(), by_name: HashMap::new(), seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers a new parameter; panics on a duplicate name since that is a
    /// construction bug, not a runtime condition.
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter name {name}");
        let mut value = Tensor::zeros(rows, cols);
        match init {
            Init::Zeros => {}
            Init::Constant { value: v } => value.data_mut().iter_mut().for_each(|x| *x = T::lit(v)),
            Init::Uniform { bound } => {
                for x in value.data_mut() {
                    *x = T::lit(self.rng.gen_range(-bound..=bound));
                }
            }
            Init::LogUniform { lo, hi } => {
                let (a, b) = (lo.ln(), hi.ln());
                for x in value.data_mut() {
                    *x = T::lit(self.rng.gen_range(a..=b).exp());
                }
            }
        }
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id);
        self.entries.push(Entry { name, value, init });
        id
    }

    /// Weight matrix `fan_in x fan_out` with the default uniform `1/sqrt(fan_in)` bound.
    pub fn add_weight(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize) -> ParamId {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        self.add(name, fan_in, fan_out, Init::Uniform { bound })
    }

    pub fn add_bias(&mut self, name: impl Into<String>, width: usize) -> ParamId {
        self.add(name, 1, width, Init::Zeros)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn init(&self, id: ParamId) -> Init {
        self.entries[id.0].init
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    /// Replaces a value, keeping the registered shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let slot = &mut self.entries[id.0].value;
        if slot.shape() != value.shape() {
            return Err(Error::Shape {
                op: "ParameterSet::set",
                detail: format!("{:?} into {:?}", value.shape(), slot.shape()),
            });
        }
        *slot = value;
        Ok(())
    }

    /// Sets every entry of every parameter whose name starts with `prefix`.
    pub fn fill_prefix(&mut self, prefix: &str, value: T) {
        for e in self.entries.iter_mut().filter(|e| e.name.starts_with(prefix)) {
            e.value.data_mut().iter_mut().for_each(|x| *x = value);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&self) -> ParamGrads<T> {
        ParamGrads { grads: self.entries.iter().map(|e| Tensor::zeros(e.value.rows(), e.value.cols())).collect() }
    }

    /// Ordered `(name, value)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e.name.as_str(), &e.value))
    }

    /// Converts all values to another scalar type, keeping names and order.
    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        ParameterSet {
            entries: self
                .entries
                .iter()
                .map(|e| Entry { name: e.name.clone(), value: e.value.cast(), init: e.init })
                .collect(),
            by_name: self.by_name.clone(),
            seed: self.seed,
            rng: self.rng.clone(),
        }
    }
}

/// Dense gradient for every parameter of a set, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<T> {
    grads: Vec<Tensor<T>>,
}

impl<T: Real> ParamGrads<T> {
    pub(crate) fn from_vec(grads: Vec<Tensor<T>>) -> Self {
        Self { grads }
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    /// Adds `other` entry-wise.
    pub fn accumulate(&mut self, other: &ParamGrads<T>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn global_norm(&self) -> T {
        self.grads.iter().map(|g| g.sq_norm()).sum::<T>().sqrt()
    }
}
