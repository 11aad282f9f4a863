//! Named parameters with Adam state.

use std::collections::BTreeMap;

use crate::tape::Gradients;
use crate::tensor::Tensor;
use crate::TensorError;

/// Parameters keyed by name, iterated in name order.
pub type Params<S = f32> = BTreeMap<String, Tensor<S>>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl AdamConfig {
    pub fn new(lr: f32, weight_decay: f32) -> Self {
        AdamConfig {
            lr,
            weight_decay,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Moments {
    m: Tensor,
    v: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    params: Params,
    moments: BTreeMap<String, Moments>,
    step: u64,
}

impl ParamStore {
    pub fn new(params: Params) -> Self {
        let moments = params
            .iter()
            .map(|(name, p)| {
                (
                    name.clone(),
                    Moments {
                        m: Tensor::zeros(p.rows(), p.cols()),
                        v: Tensor::zeros(p.rows(), p.cols()),
                    },
                )
            })
            .collect();
        ParamStore {
            params,
            moments,
            step: 0,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn into_params(self) -> Params {
        self.params
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// One Adam update with bias correction; `wd·θ` is added to the gradient first.
    pub fn adam_step(&mut self, grads: &Gradients, cfg: &AdamConfig) -> Result<(), TensorError> {
        for (name, p) in &self.params {
            match grads.get(name) {
                Some(g) if g.shape() == p.shape() => {}
                Some(g) => {
                    return Err(TensorError::Shape {
                        op: "adam_step",
                        left: p.shape(),
                        right: g.shape(),
                    })
                }
                None => return Err(TensorError::MissingGradient(name.clone())),
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (name, p) in self.params.iter_mut() {
            let g = &grads[name];
            let mo = self.moments.get_mut(name).expect("moments mirror params");
            let (m, v) = (mo.m.data_mut(), mo.v.data_mut());
            for (i, (theta, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gi = gi + cfg.weight_decay * *theta;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
