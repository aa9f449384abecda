//! Named, ordered parameter storage and matching gradient buffers.
//!
//! Parameters register in a fixed order while the model is built; that
//! order drives both seeded initialization (so a seed fully determines the
//! weights) and the checkpoint layout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::tensor::Scalar;

/// Handle to one registered parameter, valid for the `Parameters` that
/// issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
pub struct ParamDef {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamDef {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All model parameters, in registration order.
#[derive(Clone, Debug)]
pub struct Parameters<T> {
    defs: Vec<ParamDef>,
    values: Vec<Vec<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Parameters<T> {
    /// Start an empty store whose weight draws come from the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            defs: Vec::new(),
            values: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Register a weight tensor initialized from a zero-mean normal whose
    /// variance is `2 / fan_in` — scaled for rectified-linear layers.
    pub fn weight(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize) -> ParamId {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let len = shape.iter().product();
        let data: Vec<T> = (0..len)
            .map(|_| T::from_f64(normal.sample(&mut self.rng)))
            .collect();
        self.push(name.into(), shape.to_vec(), data)
    }

    /// Register a bias vector initialized to zero.
    pub fn bias(&mut self, name: impl Into<String>, len: usize) -> ParamId {
        self.push(name.into(), vec![len], vec![T::zero(); len])
    }

    fn push(&mut self, name: String, shape: Vec<usize>, data: Vec<T>) -> ParamId {
        debug_assert!(
            !self.defs.iter().any(|d| d.name == name),
            "duplicate parameter name {name}"
        );
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.defs.push(ParamDef { name, shape });
        self.values.push(data);
        ParamId(self.defs.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }

    pub fn defs(&self) -> &[ParamDef] {
        &self.defs
    }

    /// Handles for every registered parameter, in registration order.
    pub fn ids(&self) -> Vec<ParamId> {
        (0..self.defs.len()).map(ParamId).collect()
    }

    pub fn def(&self, id: ParamId) -> &ParamDef {
        &self.defs[id.0]
    }

    pub fn tensor_count(&self) -> usize {
        self.defs.len()
    }

    /// Total scalar count across all parameters.
    pub fn total_len(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    /// Iterate `(def, values)` pairs in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&ParamDef, &[T])> {
        self.defs.iter().zip(self.values.iter().map(Vec::as_slice))
    }

    /// Visit every parameter slice mutably, in registration order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&ParamDef, &mut [T])) {
        for (def, vals) in self.defs.iter().zip(self.values.iter_mut()) {
            f(def, vals);
        }
    }

    /// Overwrite all values from `(name, data)` pairs. Every stored tensor
    /// must be present with the right length, and no extras are allowed.
    pub fn load_named(&mut self, tensors: &[(String, Vec<f32>)]) -> Result<()> {
        if tensors.len() != self.defs.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                self.defs.len(),
                tensors.len()
            )));
        }
        for ((name, data), (def, _)) in tensors.iter().zip(self.defs.iter().zip(&self.values)) {
            if name != &def.name {
                return Err(Error::Checkpoint(format!(
                    "parameter order mismatch: expected {}, found {name}",
                    def.name
                )));
            }
            if data.len() != def.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} holds {} values, expected {}",
                    data.len(),
                    def.len()
                )));
            }
        }
        for ((_, data), vals) in tensors.iter().zip(self.values.iter_mut()) {
            for (v, &f) in vals.iter_mut().zip(data) {
                *v = T::from_f32(f);
            }
        }
        Ok(())
    }
}

/// Gradient buffers parallel to a `Parameters` store.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    store: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Zero gradients shaped after the given parameters.
    pub fn zeros_like(params: &Parameters<T>) -> Self {
        Self {
            store: params.values.iter().map(|v| vec![T::zero(); v.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.store[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.store[id.0]
    }

    /// Mutable access to a weight/bias gradient pair at once (the ids must
    /// differ).
    pub fn wb_mut(&mut self, w: ParamId, b: ParamId) -> (&mut [T], &mut [T]) {
        let [wg, bg] = self
            .store
            .get_disjoint_mut([w.0, b.0])
            .expect("weight and bias ids are distinct and in range");
        (wg, bg)
    }

    pub fn zero(&mut self) {
        for g in &mut self.store {
            g.fill(T::zero());
        }
    }

    /// Add another gradient set element-wise (used to accumulate a batch).
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        debug_assert_eq!(self.store.len(), other.store.len());
        for (a, b) in self.store.iter_mut().zip(&other.store) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Scale every gradient by a constant (e.g. 1/batch).
    pub fn scale(&mut self, factor: T) {
        for g in &mut self.store {
            for x in g.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// Slices in registration order, paired with the parameter store.
    pub fn iter(&self) -> impl Iterator<Item = &[T]> {
        self.store.iter().map(Vec::as_slice)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.store.iter_mut()
    }

    /// First non-finite gradient, reported as (parameter name, index).
    pub fn first_non_finite(&self, params: &Parameters<T>) -> Option<(String, usize)> {
        for (def, g) in params.defs.iter().zip(&self.store) {
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Some((def.name.clone(), pos));
            }
        }
        None
    }
}
