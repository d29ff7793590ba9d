use std::collections::BTreeMap;

use super::{ParamKind, ParamStore, Tensor};

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam over the trainable entries of a [`ParamStore`] whose names start
/// with `prefix`.
pub struct Adam {
    cfg: AdamConfig,
    prefix: String,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, prefix: &str) -> Self {
        Adam { cfg, prefix: prefix.to_string(), step: 0, moments: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.cfg.beta1.powi(t);
        let c2 = 1.0 - self.cfg.beta2.powi(t);
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        for (name, p) in store.iter_mut() {
            if p.kind != ParamKind::Trainable || !name.starts_with(&self.prefix) {
                continue;
            }
            let Some(grad) = p.grad.as_ref() else { continue };
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (Tensor::zeros(grad.dims()), Tensor::zeros(grad.dims())));
            let value = std::rc::Rc::make_mut(&mut p.value);
            for (((w, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Rescales gradients under `prefix` so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(store: &mut ParamStore, prefix: &str, max_norm: f64) -> f64 {
    let norm = store
        .iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .filter_map(|(_, p)| p.grad.as_ref())
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for (name, p) in store.iter_mut() {
            if name.starts_with(prefix) {
                if let Some(g) = p.grad.as_mut() {
                    for v in g.data_mut() {
                        *v *= s;
                    }
                }
            }
        }
    }
    norm
}
