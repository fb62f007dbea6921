use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::rng::rng_for;
use super::{Gradients, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Moments<S> {
    m: Vec<S>,
    v: Vec<S>,
}

/// Named trainable tensors, the frozen subset, and Adam state for the rest.
#[derive(Debug, Clone)]
pub struct ParamStore<S> {
    params: BTreeMap<String, Tensor<S>>,
    frozen: BTreeSet<String>,
    moments: BTreeMap<String, Moments<S>>,
    step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    /// Decoupled decay: `p -= lr · weight_decay · p` after the Adam update.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl<S: Real> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
            frozen: BTreeSet::new(),
            moments: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<S>) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name.to_string(), t);
        Ok(())
    }

    /// Uniform in `±1/sqrt(fan_in)`, drawn from a stream keyed by `(seed, name)`.
    pub fn init_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, seed: u64) -> Result<()> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.init_range(name, shape, -bound, bound, seed)
    }

    /// Uniform in `±sqrt(6/fan_in)`, for weights feeding a relu.
    pub fn init_relu(&mut self, name: &str, shape: &[usize], fan_in: usize, seed: u64) -> Result<()> {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        self.init_range(name, shape, -bound, bound, seed)
    }

    pub fn init_range(&mut self, name: &str, shape: &[usize], lo: f64, hi: f64, seed: u64) -> Result<()> {
        let mut rng = rng_for(seed, name);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| S::of(rng.gen_range(lo..hi))).collect();
        self.insert(name, Tensor::new(shape, data)?)
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn numel(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn freeze(&mut self, name: &str) -> Result<()> {
        if !self.params.contains_key(name) {
            return Err(Error::Contract(format!("cannot freeze unknown parameter `{name}`")));
        }
        self.frozen.insert(name.to_string());
        self.moments.remove(name);
        Ok(())
    }

    /// Freezes every parameter whose name starts with `prefix`.
    pub fn freeze_prefix(&mut self, prefix: &str) -> Result<usize> {
        let names: Vec<String> = self.params.keys().filter(|k| k.starts_with(prefix)).cloned().collect();
        for n in &names {
            self.freeze(n)?;
        }
        Ok(names.len())
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen(&self) -> impl Iterator<Item = &str> {
        self.frozen.iter().map(|s| s.as_str())
    }

    /// Sets every parameter's gradient from `grads`; parameters absent from
    /// the pass receive zeros.
    pub fn apply_gradients(&mut self, grads: &Gradients<S>) -> Result<()> {
        for (name, t) in self.params.iter_mut() {
            let g = grads.param(name).unwrap_or_else(|| vec![S::zero(); t.len()]);
            t.set_grad(g)?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for t in self.params.values_mut() {
            t.clear_grad();
        }
    }

    /// Copies values of every parameter present in both stores (same shape required).
    pub fn copy_matching(&mut self, other: &ParamStore<S>, prefix: &str) -> Result<usize> {
        let mut copied = 0;
        for (name, src) in other.params.iter().filter(|(k, _)| k.starts_with(prefix)) {
            if let Some(dst) = self.params.get_mut(name) {
                if dst.shape() != src.shape() {
                    return Err(Error::dim(
                        "copy_matching",
                        format!("`{name}`: {:?} vs {:?}", dst.shape(), src.shape()),
                    ));
                }
                dst.data_mut().copy_from_slice(src.data());
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// One Adam update over all non-frozen parameters, then clears gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        for (name, t) in &self.params {
            if !self.frozen.contains(name) && t.grad().is_none() {
                return Err(Error::Contract(format!("parameter `{name}` has no gradient")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for (name, p) in self.params.iter_mut() {
            if self.frozen.contains(name) {
                continue;
            }
            let grad = p.grad().expect("checked above").to_vec();
            let mom = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![S::zero(); grad.len()],
                v: vec![S::zero(); grad.len()],
            });
            for (i, value) in p.data_mut().iter_mut().enumerate() {
                let g = grad[i].as_f64();
                let m = b1 * mom.m[i].as_f64() + (1.0 - b1) * g;
                let v = b2 * mom.v[i].as_f64() + (1.0 - b2) * g * g;
                mom.m[i] = S::of(m);
                mom.v[i] = S::of(v);
                let update = (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
                let mut x = value.as_f64() - cfg.lr * update;
                x -= cfg.lr * cfg.weight_decay * value.as_f64();
                *value = S::of(x);
            }
            p.clear_grad();
            if p.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric {
                    op: "adam_step",
                    detail: format!("parameter `{name}` became non-finite"),
                });
            }
        }
        Ok(())
    }

    /// Adam moments as `(name, m, v)` rows, for checkpointing.
    pub fn optimizer_state(&self) -> impl Iterator<Item = (&str, &[S], &[S])> {
        self.moments.iter().map(|(k, mo)| (k.as_str(), mo.m.as_slice(), mo.v.as_slice()))
    }

    pub fn restore_optimizer_state(&mut self, step: u64, rows: Vec<(String, Vec<S>, Vec<S>)>) -> Result<()> {
        self.moments.clear();
        for (name, m, v) in rows {
            let len = self
                .params
                .get(&name)
                .ok_or_else(|| Error::format(format!("optimizer state for unknown parameter `{name}`")))?
                .len();
            if m.len() != len || v.len() != len || self.frozen.contains(&name) {
                return Err(Error::format(format!("optimizer state for `{name}` does not match")));
            }
            self.moments.insert(name, Moments { m, v });
        }
        self.step = step;
        Ok(())
    }

    pub fn reset_optimizer(&mut self) {
        self.moments.clear();
        self.step = 0;
    }
}
