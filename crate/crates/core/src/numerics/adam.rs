//! Bias-corrected Adam.

use std::collections::BTreeMap;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::param::{ParamId, ParamStore};
use super::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Moments<T> {
    pub m: Array2<T>,
    pub v: Array2<T>,
}

/// Optimizer state: per-parameter first and second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub moments: BTreeMap<ParamId, Moments<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    /// One update over `ids`, then zero their gradients.
    pub fn step(&mut self, store: &mut ParamStore<T>, ids: &[ParamId]) {
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one_b1 = T::from_f64(1.0 - c.beta1);
        let one_b2 = T::from_f64(1.0 - c.beta2);
        let corr1 = T::from_f64(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64(1.0 - c.beta2.powi(t));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.eps);

        for &id in ids {
            let shape = store.value(id).dim();
            let mom = self.moments.entry(id).or_insert_with(|| Moments {
                m: Array2::zeros(shape),
                v: Array2::zeros(shape),
            });
            let param = store.get(id);
            let grad = param.grad.clone();
            let value = store.value_mut(id);
            Zip::from(value)
                .and(&mut mom.m)
                .and(&mut mom.v)
                .and(&grad)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + one_b1 * g;
                    *v = b2 * *v + one_b2 * g * g;
                    let m_hat = *m / corr1;
                    let v_hat = *v / corr2;
                    *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                });
            store.zero_grad(id);
        }
    }
}
