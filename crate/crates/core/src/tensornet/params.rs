use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::{Scalar, TensorError};

static NEXT_STORE_UID: AtomicU64 = AtomicU64::new(1);

fn next_uid() -> u64 {
    NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    name: String,
    shape: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }
}

/// Named, ordered collection of trainable tensors.
///
/// Every store carries a process-unique id so graphs can tell stores
/// apart; clones get a fresh id.
#[derive(Debug, PartialEq)]
pub struct ParamStore<T> {
    uid: u64,
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self { uid: next_uid(), params: self.params.clone() }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { uid: next_uid(), params: Vec::new() }
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<T>) -> Result<ParamId, TensorError> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(TensorError::ShapeMismatch {
                op: "param",
                expected: shape.to_vec(),
                found: vec![values.len()],
            });
        }
        if self.find(&name).is_some() {
            return Err(TensorError::InvalidArgument { op: "param", reason: format!("duplicate name {name}") });
        }
        self.params.push(Parameter { name, shape: shape.to_vec(), values });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Adds a tensor drawn uniformly from `[-bound, bound]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> Result<ParamId, TensorError> {
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| if bound > 0.0 { T::from_f64(rng.random_range(-bound..=bound)) } else { T::zero() })
            .collect();
        self.add(name, shape, values)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[T] {
        &self.params[id.0].values
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            uid: next_uid(),
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: p.values.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Copies values from `other`, which must have identical names and shapes.
    pub fn copy_from(&mut self, other: &ParamStore<T>) -> Result<(), TensorError> {
        if self.params.len() != other.params.len() {
            return Err(TensorError::ShapeMismatch {
                op: "copy_from",
                expected: vec![self.params.len()],
                found: vec![other.params.len()],
            });
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(TensorError::InvalidArgument {
                    op: "copy_from",
                    reason: format!("parameter {} does not match {}", dst.name, src.name),
                });
            }
            dst.values.copy_from_slice(&src.values);
        }
        Ok(())
    }
}

/// One gradient vector per parameter of a store, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer<T> {
    grads: Vec<Vec<T>>,
}

impl<T: Scalar> GradBuffer<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self { grads: store.iter().map(|p| vec![T::zero(); p.values.len()]).collect() }
    }

    pub(crate) fn from_vecs(grads: Vec<Vec<T>>) -> Self {
        Self { grads }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_assign(&mut self, other: &GradBuffer<T>) {
        assert_eq!(self.grads.len(), other.grads.len(), "gradient buffers of different stores");
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        self.grads.iter_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn l2_norm(&self) -> f64 {
        self.grads.iter().flatten().map(|g| g.as_f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias correction. Moment buffers mirror the store's shapes.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|p| vec![T::zero(); p.values.len()]).collect::<Vec<_>>();
        Self { config, step: 0, first: zeros(), second: zeros() }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, id: ParamId) -> (&[T], &[T]) {
        (&self.first[id.0], &self.second[id.0])
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &GradBuffer<T>) {
        assert_eq!(store.len(), self.first.len(), "optimizer built for a different store");
        assert_eq!(grads.len(), self.first.len(), "gradient buffer built for a different store");
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - c.beta1.powi(t);
        let correction2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        for (i, param) in store.params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.first[i], &mut self.second[i], &grads.grads[i]);
            for j in 0..param.values.len() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                let m_hat = m[j].as_f64() / correction1;
                let v_hat = v[j].as_f64() / correction2;
                let update = c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
                param.values[j] -= T::from_f64(update);
            }
        }
    }
}
