use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam hyperparameters. The defaults follow the exposed training config:
/// lr 3e-4, β₁ 0.9, β₂ 0.98, ε 1e-9.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// First/second-moment estimates plus a per-parameter step counter.
///
/// Step counters are per parameter so that parameters which did not take part
/// in a given graph (e.g. the other sentiment's decoder) are left completely
/// untouched: no moment decay, no update.
pub struct AdamState<T: Scalar> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: Vec<u64>,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_store(store: &ParamStore<T>) -> Self {
        let m = store
            .iter()
            .map(|(_, _, p)| vec![T::zero(); p.numel()])
            .collect::<Vec<_>>();
        let v = m.clone();
        let t = vec![0u64; store.len()];
        AdamState { m, v, t }
    }
}

/// Applies one bias-corrected adaptive update to every parameter listed in
/// `grads`, consuming the gradients. Deterministic given identical inputs.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &[(ParamId, Tensor<T>)],
    state: &mut AdamState<T>,
    hp: &AdamParams,
) -> Result<()> {
    let beta1 = T::from_f64(hp.beta1);
    let beta2 = T::from_f64(hp.beta2);
    let one = T::one();
    let eps = T::from_f64(hp.eps);
    for (id, grad) in grads {
        let idx = id.index();
        let param = store.get_mut(*id);
        if param.numel() != grad.numel() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: param.shape().to_vec(),
                rhs: grad.shape().to_vec(),
            });
        }
        state.t[idx] += 1;
        let t = state.t[idx] as i32;
        let bc1 = one - T::from_f64(hp.beta1).powi(t);
        let bc2 = one - T::from_f64(hp.beta2).powi(t);
        let lr = T::from_f64(hp.lr);
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        for ((w, &g), (mi, vi)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mi = beta1 * *mi + (one - beta1) * g;
            *vi = beta2 * *vi + (one - beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
