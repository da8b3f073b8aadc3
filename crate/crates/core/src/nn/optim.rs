use serde::{Deserialize, Serialize};

use super::{ParameterSet, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive moment estimation over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Adam<T> {
    pub config: AdamConfig,
    first: Vec<T>,
    second: Vec<T>,
    steps: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            first: vec![T::zero(); len],
            second: vec![T::zero(); len],
            steps: 0,
        }
    }

    pub fn for_params(config: AdamConfig, params: &ParameterSet<T>) -> Self {
        Self::new(config, params.len())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.first, &self.second)
    }

    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &ParameterSet<T>) -> Result<()> {
        if !params.same_shape(grads) || params.len() != self.first.len() {
            return Err(Error::Shape {
                context: "optimizer step",
                expected: self.first.len(),
                got: grads.len(),
            });
        }
        self.apply(params.values_mut(), grads.values().copied());
        Ok(())
    }

    pub fn step_slice(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::Shape {
                context: "optimizer step",
                expected: self.first.len(),
                got: grads.len(),
            });
        }
        self.apply(params.iter_mut(), grads.iter().copied());
        Ok(())
    }

    fn apply<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut T>,
        grads: impl Iterator<Item = T>,
    ) {
        self.steps += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let t = self.steps as i32;
        let lr_t =
            T::of(c.learning_rate * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t)));
        let eps = T::of(c.eps);
        for (((p, g), m), v) in params
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + eps);
        }
    }
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before rescaling.
pub fn clip_grad_norm<T: Real>(grads: &mut ParameterSet<T>, max_norm: T) -> T {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / (norm + T::of(1e-6)));
    }
    norm
}

/// `target <- (1 - tau) target + tau online`, elementwise.
pub fn soft_update<T: Real>(
    target: &mut ParameterSet<T>,
    online: &ParameterSet<T>,
    tau: T,
) -> Result<()> {
    if !(tau >= T::zero() && tau <= T::one()) {
        return Err(Error::Config(format!(
            "soft update rate must lie in [0, 1], got {tau}"
        )));
    }
    if !target.same_shape(online) {
        return Err(Error::Shape {
            context: "soft update",
            expected: target.len(),
            got: online.len(),
        });
    }
    for (t, &o) in target.values_mut().zip(online.values()) {
        *t = (T::one() - tau) * *t + tau * o;
    }
    Ok(())
}
