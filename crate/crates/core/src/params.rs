//! Named parameter storage, gradient buffers and the Adam optimiser.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGrads, Tape, Var};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Matrix<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<T>) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    /// Uniform init in ±sqrt(3/fan_in) (unit-variance-preserving).
    pub fn insert_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let bound = (3.0 / fan_in as f64).sqrt();
        let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
        self.insert(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn get(&self, id: usize) -> &Matrix<T> {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Matrix<T> {
        &mut self.values[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Matrix<T>> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Pushes parameter `id` onto the tape as a trainable leaf.
    pub fn leaf(&self, tape: &mut Tape<T>, id: usize) -> Var {
        tape.param(id, self.values[id].clone())
    }

    pub fn map_values(&mut self, mut f: impl FnMut(&str, &mut Matrix<T>)) {
        for (n, v) in self.names.iter().zip(&mut self.values) {
            f(n, v);
        }
    }
}

/// Dense gradient buffer aligned with a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct GradBuffer<T> {
    pub grads: Vec<Matrix<T>>,
}

impl<T: Scalar> GradBuffer<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self { grads: store.values.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect() }
    }

    pub fn add(&mut self, g: &ParamGrads<T>) {
        for (id, m) in &g.grads {
            self.grads[*id].add_assign(m);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: T) {
        for g in &mut self.grads {
            g.scale_assign(k);
        }
    }

    pub fn global_norm(&self) -> T {
        self.grads.iter().map(Matrix::sq_norm).sum::<T>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: T) -> T {
        let norm = self.global_norm();
        if norm > max_norm && norm > T::zero() {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = GradBuffer::zeros_like(store).grads;
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &GradBuffer<T>) {
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::one() - T::of(c.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::of(c.beta2.powi(self.step as i32));
        let lr = T::of(c.lr);
        let eps = T::of(c.eps);
        for (id, g) in grads.grads.iter().enumerate() {
            let p = store.values[id].data_mut();
            let m = self.m[id].data_mut();
            let v = self.v[id].data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
