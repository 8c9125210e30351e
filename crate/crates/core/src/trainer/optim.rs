use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{DType, Tensor, Var};

use crate::encoder::ParamStore;
use crate::error::Result;

/// Adam with one learning rate per parameter. A parameter whose rate is 0
/// is left untouched, moments included.
#[derive(Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: BTreeMap<String, Moments>,
}

#[derive(Debug)]
struct Moments {
    m: Tensor,
    v: Tensor,
    t: i32,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: BTreeMap::new(),
        }
    }
}

impl Adam {
    /// Number of updates applied to `name` so far.
    pub fn steps_of(&self, name: &str) -> i32 {
        self.state.get(name).map_or(0, |m| m.t)
    }

    /// Updates every parameter that has a gradient; returns the names updated.
    pub fn step(&mut self, grads: &[(String, Var, Tensor)], lr_of: impl Fn(&str) -> f64) -> Result<Vec<String>> {
        let mut updated = Vec::new();
        for (name, var, g) in grads {
            let lr = lr_of(name);
            if lr == 0.0 {
                continue;
            }
            if !self.state.contains_key(name) {
                let fresh = Moments {
                    m: g.zeros_like()?,
                    v: g.zeros_like()?,
                    t: 0,
                };
                self.state.insert(name.clone(), fresh);
            }
            let st = self.state.get_mut(name).expect("inserted above");
            st.t += 1;
            st.m = ((&st.m * self.beta1)? + (g * (1.0 - self.beta1))?)?;
            st.v = ((&st.v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&st.m / (1.0 - self.beta1.powi(st.t)))?;
            let v_hat = (&st.v / (1.0 - self.beta2.powi(st.t)))?;
            let delta = (m_hat / (v_hat.sqrt()? + self.eps)?)?;
            var.set(&(var.as_tensor().detach() - (delta * lr)?)?)?;
            updated.push(name.clone());
        }
        Ok(updated)
    }
}

/// Gradients of every parameter in `store` that received one.
pub fn collect_grads(store: &ParamStore, grads: &GradStore) -> Vec<(String, Var, Tensor)> {
    store
        .iter()
        .filter_map(|(name, var)| grads.get(var.as_tensor()).map(|g| (name.to_string(), var.clone(), g.clone())))
        .collect()
}

pub fn global_norm(grads: &[(String, Var, Tensor)]) -> Result<f64> {
    let mut sq = 0.0;
    for (_, _, g) in grads {
        sq += g.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
    }
    Ok(sq.sqrt())
}

/// Rescales gradients so their global norm is at most `max_norm`. Returns
/// the norm before and after.
pub fn clip_grad_norm(grads: &mut [(String, Var, Tensor)], max_norm: f64) -> Result<(f64, f64)> {
    let before = global_norm(grads)?;
    if before > max_norm {
        let scale = max_norm / (before + 1e-6);
        for (_, _, g) in grads.iter_mut() {
            *g = (&*g * scale)?;
        }
    }
    Ok((before, global_norm(grads)?))
}
