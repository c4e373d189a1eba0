//! Parameter updates restricted to a set of name prefixes.

use std::collections::BTreeMap;

use crate::autodiff::{Mat, ParamStore};

use super::config::OptimizerKind;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    momentum: f64,
    clip_norm: f64,
    step: u64,
    first: BTreeMap<String, Mat>,
    second: BTreeMap<String, Mat>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, momentum: f64, clip_norm: f64) -> Self {
        Self {
            kind,
            lr,
            momentum,
            clip_norm,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter that has a gradient. Names not
    /// in `params` are ignored. Returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Mat>) -> f64 {
        let norm = grads.values().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
        let scale = if self.clip_norm > 0.0 && norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        self.step += 1;
        for (name, grad) in grads {
            let Some(value) = params.get_mut(name) else { continue };
            let g = grad * scale;
            match self.kind {
                OptimizerKind::Sgd => {
                    let v = self.first.entry(name.clone()).or_insert_with(|| Mat::zeros(g.raw_dim()));
                    *v = &*v * self.momentum + &g;
                    value.scaled_add(-self.lr, v);
                }
                OptimizerKind::Adam => {
                    let m = self.first.entry(name.clone()).or_insert_with(|| Mat::zeros(g.raw_dim()));
                    *m = &*m * ADAM_BETA1 + &g * (1.0 - ADAM_BETA1);
                    let v = self.second.entry(name.clone()).or_insert_with(|| Mat::zeros(g.raw_dim()));
                    *v = &*v * ADAM_BETA2 + &g.mapv(|x| x * x) * (1.0 - ADAM_BETA2);
                    let c1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
                    let c2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
                    let update = ndarray::Zip::from(&*m)
                        .and(&*v)
                        .map_collect(|&m, &v| (m / c1) / ((v / c2).sqrt() + ADAM_EPS));
                    value.scaled_add(-self.lr, &update);
                }
            }
        }
        norm
    }
}
