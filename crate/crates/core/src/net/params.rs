use alloc::collections::BTreeMap;
#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{Graph, Var};
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { tensors: BTreeMap::new() }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors.get(name).ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors.get_mut(name).ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn insert(&mut self, name: &str, t: Tensor<T>) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Fails unless `other` has exactly the same names and shapes.
    pub fn check_compatible<U: Scalar>(&self, other: &ParamStore<U>) -> Result<()> {
        for (name, t) in &self.tensors {
            match other.tensors.get(name) {
                Some(o) if o.shape == t.shape => {}
                Some(o) => {
                    return Err(Error::Shape(format!("parameter {name}: expected {:?}, found {:?}", t.shape, o.shape)))
                }
                None => return Err(Error::Config(format!("missing parameter {name}"))),
            }
        }
        if let Some(extra) = other.tensors.keys().find(|k| !self.tensors.contains_key(*k)) {
            return Err(Error::Config(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }

    /// Insert every tensor as a trainable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|(k, v)| (k.clone(), g.param(v.clone()))).collect(),
        }
    }
}

/// Graph handles of a bound [`ParamStore`].
#[derive(Debug, Clone, Default)]
pub struct Bound {
    pub vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    /// Gradients by parameter name; parameters off the loss path get zeros.
    pub fn grads<T: Scalar>(&self, g: &Graph<T>) -> ParamStore<T> {
        ParamStore {
            tensors: self
                .vars
                .iter()
                .map(|(k, &v)| (k.clone(), g.grad(v).unwrap_or_else(|| Tensor::zeros(g.shape(v)))))
                .collect(),
        }
    }
}

/// Deterministic parameter initialization.
pub(crate) struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn normal<T: Scalar>(&mut self, shape: &[usize], std: f64) -> Tensor<T> {
        let dist = Normal::new(0.0, std).expect("finite positive std");
        let n = shape.iter().product();
        let data: Vec<T> = (0..n).map(|_| T::from_f64(dist.sample(&mut self.rng))).collect();
        Tensor { shape: shape.to_vec(), data }
    }

    /// He initialization for a conv weight `[co, ci, kh, kw]`.
    pub fn conv<T: Scalar>(&mut self, co: usize, ci: usize, k: usize) -> Tensor<T> {
        let fan_in = (ci * k * k) as f64;
        self.normal(&[co, ci, k, k], (2.0 / fan_in).sqrt())
    }
}

pub(crate) fn add_conv<T: Scalar>(p: &mut ParamStore<T>, init: &mut Init, name: &str, co: usize, ci: usize, k: usize) {
    p.insert(&format!("{name}.weight"), init.conv(co, ci, k));
    p.insert(&format!("{name}.bias"), Tensor::zeros(&[co]));
}
