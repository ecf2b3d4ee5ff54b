use super::params::{Grads, Group, Hyperparams, ParamSet};
use crate::error::Result;

pub const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update. Policy arrays ascend their gradient,
/// value arrays descend it.
pub fn adam_step(params: &mut ParamSet, grads: &Grads, hyper: &Hyperparams) -> Result<()> {
    params.check_grads(grads)?;
    params.step += 1;
    let t = params.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (arr, g) in params.arrays.iter_mut().zip(&grads.arrays) {
        let sign = match arr.group {
            Group::Policy => 1.0,
            Group::Value => -1.0,
        };
        for i in 0..g.len() {
            let gi = g[i];
            arr.m[i] = hyper.beta1 * arr.m[i] + (1.0 - hyper.beta1) * gi;
            arr.v[i] = hyper.beta2 * arr.v[i] + (1.0 - hyper.beta2) * gi * gi;
            let m_hat = arr.m[i] / c1;
            let v_hat = arr.v[i] / c2;
            arr.values[i] += sign * hyper.alpha * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}
