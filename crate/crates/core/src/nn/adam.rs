use std::collections::{BTreeMap, HashMap};

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Adam with bias correction. State is keyed by parameter name so it can be
/// checkpointed next to the weights.
#[derive(Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients whose global norm exceeds this value; 0 disables.
    pub max_grad_norm: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: 0.0,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn with_clip(mut self, max_grad_norm: f64) -> Self {
        self.max_grad_norm = max_grad_norm;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter of `store` that has a gradient.
    pub fn step(&mut self, store: &ParamStore, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let scale = if self.max_grad_norm > 0.0 {
            let norm = super::global_grad_norm(store, grads)?;
            if !norm.is_finite() {
                return Err(Error::invalid("non-finite gradient norm"));
            }
            if norm > self.max_grad_norm {
                self.max_grad_norm / norm
            } else {
                1.0
            }
        } else {
            1.0
        };
        for (name, var) in store.vars() {
            let Some(g) = grads.get(var) else { continue };
            let g = if scale != 1.0 {
                (g * scale)?.detach()
            } else {
                g.detach()
            };
            let m = match self.m.get(name) {
                Some(m) => ((m * self.beta1)? + (&g * (1.0 - self.beta1))?)?,
                None => (&g * (1.0 - self.beta1))?,
            };
            let v = match self.v.get(name) {
                Some(v) => ((v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?,
                None => (g.sqr()? * (1.0 - self.beta2))?,
            };
            let (m, v) = (m.detach(), v.detach());
            let update = ((&m / bc1)? / ((&v / bc2)?.sqrt()? + self.eps)?)?;
            var.set(&(var.as_tensor().detach() - (update * self.lr)?)?.detach())?;
            self.m.insert(name.clone(), m);
            self.v.insert(name.clone(), v);
        }
        Ok(())
    }

    /// Moment tensors keyed `prefix + "m." + name` / `prefix + "v." + name`.
    pub fn state_tensors(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (k, t) in &self.m {
            out.insert(format!("{prefix}m.{k}"), t.clone());
        }
        for (k, t) in &self.v {
            out.insert(format!("{prefix}v.{k}"), t.clone());
        }
        out
    }

    pub fn restore(&mut self, tensors: &HashMap<String, Tensor>, prefix: &str, step: u64) {
        self.m.clear();
        self.v.clear();
        let mp = format!("{prefix}m.");
        let vp = format!("{prefix}v.");
        for (k, t) in tensors {
            if let Some(name) = k.strip_prefix(&mp) {
                self.m.insert(name.to_string(), t.clone());
            } else if let Some(name) = k.strip_prefix(&vp) {
                self.v.insert(name.to_string(), t.clone());
            }
        }
        self.step = step;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;
    use candle_core::DType;
    use rand::SeedableRng;

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::new(DType::F64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x = store.create(&mut rng, "x", &[3], Init::Normal(1.0)).unwrap();
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let loss = (&x - 2.0).unwrap().sqr().unwrap().sum_all().unwrap();
            opt.step(&store, &loss.backward().unwrap()).unwrap();
        }
        for v in x.to_vec1::<f64>().unwrap() {
            assert!((v - 2.0).abs() < 1e-3);
        }
    }
}
