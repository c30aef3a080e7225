use super::{NnError, ParamId, ParamStore, Result};
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// Per-parameter gradients; `None` where a parameter did not take part in the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    slots: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn empty(store: &ParamStore) -> Self {
        Grads {
            slots: vec![None; store.len()],
        }
    }

    /// Picks the gradients of the store's parameters out of a backward pass.
    pub fn collect(grads: &Gradients, store: &ParamStore) -> Self {
        let mut out = Grads::empty(store);
        for (tag, _) in grads.tags() {
            if tag < out.slots.len() {
                out.slots[tag] = grads.tagged(tag).cloned();
            }
        }
        out
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub fn set(&mut self, id: ParamId, grad: Tensor) {
        self.slots[id.0] = Some(grad);
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step over the parameters present in `grads`.
/// Parameters without a gradient keep their values and moments.
pub fn adam_update(store: &mut ParamStore, grads: &Grads, cfg: &AdamConfig) -> Result<()> {
    for (id, g) in grads.iter() {
        if !g.is_finite() {
            return Err(NnError::NonFiniteGradient {
                param: store.name(id).to_string(),
            });
        }
        if g.shape() != store.values[id.0].shape() {
            return Err(NnError::Config(format!(
                "gradient shape {:?} does not match parameter {}",
                g.shape(),
                store.name(id)
            )));
        }
    }
    store.step += 1;
    let t = store.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (id, g) in grads.iter() {
        let i = id.0;
        let m = store.first[i].data_mut();
        let v = store.second[i].data_mut();
        let p = store.values[i].data_mut();
        for k in 0..p.len() {
            let gk = g.data()[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

pub fn global_norm(grads: &Grads) -> f64 {
    grads
        .iter()
        .flat_map(|(_, g)| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.slots.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Optimizer settings shared by every model's training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSettings {
    pub adam: AdamConfig,
    pub clip_norm: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            adam: AdamConfig::default(),
            clip_norm: 5.0,
        }
    }
}

/// Backpropagates `loss`, clips the gradients and applies one Adam step.
/// Returns the loss value.
pub fn minimize(store: &mut ParamStore, tape: &Tape, loss: Var, settings: &TrainSettings) -> Result<f64> {
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(NnError::Training(format!("non-finite loss {value}")));
    }
    let mut grads = Grads::collect(&tape.backward(loss)?, store);
    clip_gradients(&mut grads, settings.clip_norm);
    adam_update(store, &grads, &settings.adam)?;
    Ok(value)
}
