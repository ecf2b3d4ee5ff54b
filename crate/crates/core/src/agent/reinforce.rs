//! Monte Carlo returns and the REINFORCE-with-baseline gradient.

use serde::{Deserialize, Serialize};

use super::linalg::{gemm, View};
use super::model::{log_softmax, mono_index, sigmoid, Mode, Model};
use super::model::{D_B, D_W, K_B, K_W, PI_B, PI_W, V_B, V_W, X_B, X_W};
use super::params::{Grads, Hyperparams, ParamSet};
use crate::env::ActionVector;
use crate::error::{Error, Result};
use crate::features::StateLayout;

/// One episode as seen by the learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub layout: StateLayout,
    /// Flattened states, one row of `layout.len()` per step.
    pub states: Vec<f64>,
    pub actions: Vec<ActionVector>,
    /// `rewards[t]` is the reward received after acting at step `t`.
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn new(layout: StateLayout) -> Self {
        Trajectory {
            layout,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, state: &[f64], action: ActionVector, reward: f64, log_prob: f64, value: f64) {
        assert_eq!(state.len(), self.layout.len(), "state does not match trajectory layout");
        self.states.extend_from_slice(state);
        self.actions.push(action);
        self.rewards.push(reward);
        self.log_probs.push(log_prob);
        self.values.push(value);
    }

    pub fn state(&self, t: usize) -> &[f64] {
        let l = self.layout.len();
        &self.states[t * l..(t + 1) * l]
    }
}

/// `G_t = R_{t+1} + γ G_{t+1}`, zero past the last step.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        g = r + gamma * g;
        out[t] = g;
    }
    out
}

/// Gradient of one episode.
///
/// Policy arrays receive the ascent direction of
/// `Σ_t (G_t − v̂(S_t)) ∇ln π(A_t|S_t) + η ∇H[π(·|S_t)]`, with the advantage
/// held constant. Value arrays receive the gradient of `½ Σ_t (G_t − v̂(S_t))²`,
/// to be descended. `v̂(S_t)` is read from the trajectory.
pub fn reinforce_grad(
    traj: &Trajectory,
    model: &Model,
    params: &ParamSet,
    hyper: &Hyperparams,
) -> Result<Grads> {
    model.check_params(params)?;
    if traj.layout != model.layout {
        return Err(Error::domain("trajectory layout differs from the model layout"));
    }
    let mut grads = params.zero_grads();
    let steps = traj.len();
    if steps == 0 {
        return Ok(grads);
    }
    let p = &params.arrays;
    let h = model.width;
    let hl = model.hidden_len();
    let blk = model.layout.block_len();
    let keys = model.layout.keys;
    let sl = model.layout.len();
    let na = model.n_outputs();
    let states = View::row_major(&traj.states, sl);

    // hidden activations for all steps
    let mut hidden = vec![0.0; steps * hl];
    let branches = [(X_W, X_B, 0, blk), (D_W, D_B, blk, blk), (K_W, K_B, 2 * blk, keys)];
    for (b, &(w, bias, s_off, cols)) in branches.iter().enumerate() {
        let wv = View::row_major(&p[w].values, cols).t();
        gemm(steps, cols, h, states.at(s_off), wv, 0.0, &mut hidden, b * h, hl);
        for row in hidden.chunks_exact_mut(hl) {
            row[b * h..(b + 1) * h]
                .iter_mut()
                .zip(&p[bias].values)
                .for_each(|(x, c)| *x += c);
        }
    }

    let mut logits = vec![0.0; steps * na];
    gemm(
        steps,
        hl,
        na,
        View::row_major(&hidden, hl),
        View::row_major(&p[PI_W].values, hl).t(),
        0.0,
        &mut logits,
        0,
        na,
    );

    let returns = compute_returns(&traj.rewards, hyper.gamma);
    let mut advantages: Vec<f64> = returns.iter().zip(&traj.values).map(|(g, v)| g - v).collect();
    if hyper.normalize_advantage && steps > 1 {
        let mean = advantages.iter().sum::<f64>() / steps as f64;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / steps as f64;
        let sd = var.sqrt().max(1e-8);
        advantages.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    }

    let mut d_logits = vec![0.0; steps * na];
    for t in 0..steps {
        let z = &mut logits[t * na..(t + 1) * na];
        z.iter_mut().zip(&p[PI_B].values).for_each(|(x, b)| *x += b);
        let dz = &mut d_logits[t * na..(t + 1) * na];
        let adv = advantages[t];
        if !adv.is_finite() {
            return Err(Error::Numeric { what: "advantage", step: t });
        }
        match model.mode {
            Mode::Mono => {
                let a = mono_index(&traj.actions[t], keys)?;
                let lp = log_softmax(z);
                let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
                let entropy: f64 = -probs.iter().zip(&lp).map(|(q, l)| q * l).sum::<f64>();
                for i in 0..na {
                    let score = if i == a { 1.0 } else { 0.0 } - probs[i];
                    let d_entropy = -probs[i] * (lp[i] + entropy);
                    dz[i] = adv * score + hyper.eta * d_entropy;
                }
            }
            Mode::Poly => {
                let action = &traj.actions[t];
                if action.len() != keys {
                    return Err(Error::domain("action length differs from key count"));
                }
                for k in 0..na {
                    let q = sigmoid(z[k]);
                    let score = if action[k] { 1.0 } else { 0.0 } - q;
                    let d_entropy = -z[k] * q * (1.0 - q);
                    dz[k] = adv * score + hyper.eta * d_entropy;
                }
            }
        }
        if dz.iter().any(|d| !d.is_finite()) {
            return Err(Error::Numeric { what: "policy gradient", step: t });
        }
    }

    // action head
    gemm(
        na,
        steps,
        hl,
        View::row_major(&d_logits, na).t(),
        View::row_major(&hidden, hl),
        0.0,
        &mut grads.arrays[PI_W],
        0,
        hl,
    );
    for row in d_logits.chunks_exact(na) {
        grads.arrays[PI_B].iter_mut().zip(row).for_each(|(g, d)| *g += d);
    }

    // back into the branches
    let mut d_hidden = vec![0.0; steps * hl];
    gemm(
        steps,
        na,
        hl,
        View::row_major(&d_logits, na),
        View::row_major(&p[PI_W].values, hl),
        0.0,
        &mut d_hidden,
        0,
        hl,
    );
    for (b, &(w, bias, s_off, cols)) in branches.iter().enumerate() {
        let dh = View::row_major(&d_hidden, hl).at(b * h).t();
        gemm(h, steps, cols, dh, states.at(s_off), 0.0, &mut grads.arrays[w], 0, cols);
        for row in d_hidden.chunks_exact(hl) {
            grads.arrays[bias]
                .iter_mut()
                .zip(&row[b * h..(b + 1) * h])
                .for_each(|(g, d)| *g += d);
        }
    }

    // value head, trained on the hidden activations as fixed features
    for t in 0..steps {
        let dv = traj.values[t] - returns[t];
        if !dv.is_finite() {
            return Err(Error::Numeric { what: "value error", step: t });
        }
        let row = &hidden[t * hl..(t + 1) * hl];
        grads.arrays[V_W].iter_mut().zip(row).for_each(|(g, x)| *g += dv * x);
        grads.arrays[V_B][0] += dv;
    }
    Ok(grads)
}

/// Sum of [`reinforce_grad`] over several episodes.
pub fn reinforce_grad_batch(
    trajs: &[Trajectory],
    model: &Model,
    params: &ParamSet,
    hyper: &Hyperparams,
) -> Result<Grads> {
    let mut total = params.zero_grads();
    for traj in trajs {
        total += &reinforce_grad(traj, model, params, hyper)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn return_examples() {
        assert_eq!(compute_returns(&[1.0, 1.0, 1.0], 0.5), vec![1.75, 1.5, 1.0]);
        let r = [0.3, -2.0, 5.5, 0.0];
        assert_eq!(compute_returns(&r, 0.0), r.to_vec());
        assert_eq!(compute_returns(&[0.0; 5], 0.9), vec![0.0; 5]);
        assert!(compute_returns(&[], 0.9).is_empty());
    }

    #[test]
    fn recursion_holds_bitwise() {
        let r: Vec<f64> = (0..50).map(|i| (i as f64 * 0.77).sin()).collect();
        let g = compute_returns(&r, 0.93);
        for t in 0..49 {
            assert_eq!(g[t], r[t] + 0.93 * g[t + 1]);
        }
        assert_eq!(g[49], r[49] + 0.93 * 0.0);
    }
}
