use super::{ParamStore, RESERVED_PREFIX};
use crate::{Error, Result};

fn learnable_names(params: &ParamStore) -> Result<Vec<String>> {
    if params.is_frozen() {
        return Err(Error::Contract("optimizer step on a frozen parameter store".into()));
    }
    let names: Vec<String> = params.learnable().map(|(k, _)| k.to_string()).collect();
    for n in &names {
        if !params.grad(n)?.all_finite() {
            return Err(Error::divergence(format!("gradient of {n}")));
        }
    }
    Ok(names)
}

/// SGD with heavy-ball momentum: `v ← μv + g`, `θ ← θ − lr·v`. Zeroes grads afterwards.
pub fn sgd_step(params: &mut ParamStore, lr: f64, momentum: f64) -> Result<()> {
    for name in learnable_names(params)? {
        let grad = params.grad(&name)?.clone();
        let step = if momentum != 0.0 {
            let vname = format!("{RESERVED_PREFIX}sgd.v.{name}");
            let v = &mut params.entry_or_zeros(&vname, grad.shape()).value;
            v.data_mut().iter_mut().zip(grad.data()).for_each(|(v, g)| *v = momentum * *v + g);
            v.clone()
        } else {
            grad
        };
        let p = params.get_mut(&name)?;
        p.value.data_mut().iter_mut().zip(step.data()).for_each(|(x, s)| *x -= lr * s);
        p.grad.fill(0.0);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam. Moments live in the store under reserved names.
pub fn adam_step(params: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    let names = learnable_names(params)?;
    let tname = format!("{RESERVED_PREFIX}adam.t");
    let t = {
        let slot = &mut params.entry_or_zeros(&tname, &[1]).value;
        slot.data_mut()[0] += 1.0;
        slot.data()[0]
    };
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    for name in names {
        let grad = params.grad(&name)?.clone();
        let shape = grad.shape().to_vec();
        let m = {
            let m = &mut params.entry_or_zeros(&format!("{RESERVED_PREFIX}adam.m.{name}"), &shape).value;
            m.data_mut().iter_mut().zip(grad.data()).for_each(|(m, g)| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
            m.clone()
        };
        let v = {
            let v = &mut params.entry_or_zeros(&format!("{RESERVED_PREFIX}adam.v.{name}"), &shape).value;
            v.data_mut().iter_mut().zip(grad.data()).for_each(|(v, g)| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
            v.clone()
        };
        let p = params.get_mut(&name)?;
        for ((x, m), v) in p.value.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
            *x -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        }
        p.grad.fill(0.0);
    }
    Ok(())
}
