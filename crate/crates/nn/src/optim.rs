use crate::{Grads, NnError, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Parameters whose gradient is entirely
/// zero are left untouched, moments included.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &Grads,
    lr: f64,
    cfg: AdamConfig,
) -> Result<(), NnError> {
    if grads.0.len() != store.params.len() {
        return Err(NnError::Shape {
            op: "adam_step",
            lhs: vec![store.params.len()],
            rhs: vec![grads.0.len()],
        });
    }
    if !grads.is_finite() {
        return Err(NnError::NonFinite(format!(
            "gradients at optimizer step {}",
            store.step + 1
        )));
    }
    store.step += 1;
    let t = store.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for (p, g) in store.params.iter_mut().zip(&grads.0) {
        if g.len() != p.value.len() {
            return Err(NnError::Shape {
                op: "adam_step",
                lhs: p.value.shape().to_vec(),
                rhs: vec![g.len()],
            });
        }
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let data = p.value.data_mut();
        for i in 0..g.len() {
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g[i];
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = p.m[i] / bc1;
            let vh = p.v[i] / bc2;
            data[i] -= lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
