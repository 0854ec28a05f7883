use indexmap::IndexMap;
use rand::Rng;

use super::NumArray;
use crate::{Error, Result};

/// Names starting with this prefix hold optimizer state, not learnable values.
pub const RESERVED_PREFIX: &str = "__opt.";

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: NumArray,
    pub grad: NumArray,
}

/// Named learnable tensors with gradient slots, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
    frozen: bool,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: NumArray) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        let grad = NumArray::zeros(value.shape());
        self.entries.insert(name, Param { value, grad });
        Ok(())
    }

    /// Fan-in scaled uniform weights in `±sqrt(6 / fan_in)`.
    pub fn insert_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<()> {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| bound * (2.0 * rng.random::<f64>() - 1.0)).collect();
        self.insert(name, NumArray::new(shape.to_vec(), data)?)
    }

    pub fn insert_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<()> {
        self.insert(name, NumArray::zeros(shape))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries.get(name).ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.entries.get_mut(name).ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn value(&self, name: &str) -> Result<&NumArray> {
        Ok(&self.get(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut NumArray> {
        Ok(&mut self.get_mut(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&NumArray> {
        Ok(&self.get(name)?.grad)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Learnable entries, skipping optimizer state.
    pub fn learnable(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().filter(|(k, _)| !k.starts_with(RESERVED_PREFIX)).map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Adds a gradient buffer into the grad slots.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        if self.frozen {
            return Err(Error::Contract("gradient accumulated into a frozen parameter store".into()));
        }
        for (name, g) in &grads.entries {
            let p = self.get_mut(name)?;
            p.grad.add_assign(g)?;
        }
        Ok(())
    }

    /// Copies learnable values only; optimizer state and the frozen flag are dropped.
    pub fn learnable_clone(&self) -> ParamStore {
        let mut out = ParamStore::new();
        for (k, p) in self.learnable() {
            out.entries.insert(k.to_string(), Param { value: p.value.clone(), grad: NumArray::zeros(p.value.shape()) });
        }
        out
    }

    /// Entries whose names begin with `prefix`.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Param)> + 'a {
        self.entries.iter().filter(move |(k, _)| k.starts_with(prefix)).map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn entry_or_zeros(&mut self, name: &str, shape: &[usize]) -> &mut Param {
        self.entries
            .entry(name.to_string())
            .or_insert_with(|| Param { value: NumArray::zeros(shape), grad: NumArray::zeros(shape) })
    }

    /// Checks that every learnable entry of `expected` exists here with the same shape.
    pub fn check_compatible(&self, expected: &ParamStore) -> Result<()> {
        for (name, p) in expected.learnable() {
            let got = self.get(name).map_err(|_| Error::Checkpoint(format!("missing parameter {name}")))?;
            if got.value.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    p.value.shape(),
                    got.value.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Gradient buffer keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    entries: IndexMap<String, NumArray>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        let slot = self.entries.entry(name.to_string()).or_insert_with(|| NumArray::zeros(shape));
        debug_assert_eq!(slot.len(), data.len());
        slot.data_mut().iter_mut().zip(data).for_each(|(a, b)| *a += b);
    }

    pub fn get(&self, name: &str) -> Option<&NumArray> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NumArray)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scale(&mut self, s: f64) {
        self.entries.values_mut().for_each(|g| g.scale(s));
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (k, g) in &other.entries {
            self.add(k, g.shape(), g.data());
        }
    }
}
