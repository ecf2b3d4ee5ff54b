//! Shallow linear policy / value model.
//!
//! Three linear branches read the spectrogram context, its time difference and
//! the keyboard. Their outputs are concatenated into one hidden vector that
//! feeds a linear action head (softmax over K+1 choices, or one sigmoid per
//! key) and a linear value head. The value head reads the hidden vector but
//! does not train the branches; those belong to the policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{affine, dot};
use super::params::{Group, ParamArray, ParamSet};
use crate::env::ActionVector;
use crate::error::{Error, Result};
use crate::features::StateLayout;

/// Smallest probability reported by the model.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One key (or none) per step.
    Mono,
    /// Any subset of keys per step, one Bernoulli per key.
    Poly,
}

// array order inside a ParamSet
pub(crate) const X_W: usize = 0;
pub(crate) const X_B: usize = 1;
pub(crate) const D_W: usize = 2;
pub(crate) const D_B: usize = 3;
pub(crate) const K_W: usize = 4;
pub(crate) const K_B: usize = 5;
pub(crate) const PI_W: usize = 6;
pub(crate) const PI_B: usize = 7;
pub(crate) const V_W: usize = 8;
pub(crate) const V_B: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Model {
    pub mode: Mode,
    pub layout: StateLayout,
    /// Units per input branch.
    pub width: usize,
}

impl Model {
    pub fn new(mode: Mode, layout: StateLayout, hidden_units: usize) -> Self {
        Model {
            mode,
            layout,
            width: (hidden_units / 4).max(1),
        }
    }

    pub fn hidden_len(&self) -> usize {
        3 * self.width
    }

    pub fn n_outputs(&self) -> usize {
        match self.mode {
            Mode::Mono => self.layout.keys + 1,
            Mode::Poly => self.layout.keys,
        }
    }

    fn shapes(&self) -> [(&'static str, Group, Vec<usize>); 10] {
        let (h, blk, k, a) = (self.width, self.layout.block_len(), self.layout.keys, self.n_outputs());
        [
            ("context.weight", Group::Policy, vec![h, blk]),
            ("context.bias", Group::Policy, vec![h]),
            ("delta.weight", Group::Policy, vec![h, blk]),
            ("delta.bias", Group::Policy, vec![h]),
            ("keys.weight", Group::Policy, vec![h, k]),
            ("keys.bias", Group::Policy, vec![h]),
            ("action.weight", Group::Policy, vec![a, 3 * h]),
            ("action.bias", Group::Policy, vec![a]),
            ("value.weight", Group::Value, vec![1, 3 * h]),
            ("value.bias", Group::Value, vec![1]),
        ]
    }

    /// Branch weights uniform in `±1/sqrt(fan_in)`; heads and biases start at
    /// zero so the initial policy is uniform.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arrays = self
            .shapes()
            .into_iter()
            .enumerate()
            .map(|(i, (name, group, shape))| {
                let n: usize = shape.iter().product();
                let values = if matches!(i, X_W | D_W | K_W) {
                    let bound = 1.0 / (shape[1].max(1) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
                } else {
                    vec![0.0; n]
                };
                ParamArray::new(name, group, shape, values)
            })
            .collect();
        ParamSet { arrays, step: 0 }
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let shapes = self.shapes();
        if params.arrays.len() != shapes.len() {
            return Err(Error::domain(format!(
                "model expects {} parameter arrays, got {}",
                shapes.len(),
                params.arrays.len()
            )));
        }
        for (arr, (name, group, shape)) in params.arrays.iter().zip(shapes) {
            if arr.name != name || arr.group != group || arr.shape != shape || arr.len() != shape.iter().product::<usize>() {
                return Err(Error::domain(format!(
                    "parameter `{}` {:?} does not match expected `{name}` {shape:?}",
                    arr.name, arr.shape
                )));
            }
        }
        Ok(())
    }

    /// Hidden activations of one flattened state.
    pub fn hidden(&self, params: &ParamSet, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.layout.len() {
            return Err(Error::domain(format!(
                "state vector has length {}, model expects {}",
                state.len(),
                self.layout.len()
            )));
        }
        let blk = self.layout.block_len();
        let h = self.width;
        let p = &params.arrays;
        let mut hidden = vec![0.0; 3 * h];
        affine(&p[X_W].values, &p[X_B].values, &state[..blk], &mut hidden[..h]);
        affine(&p[D_W].values, &p[D_B].values, &state[blk..2 * blk], &mut hidden[h..2 * h]);
        affine(&p[K_W].values, &p[K_B].values, &state[2 * blk..], &mut hidden[2 * h..]);
        Ok(hidden)
    }

    pub fn heads(&self, params: &ParamSet, hidden: &[f64]) -> (Vec<f64>, f64) {
        let p = &params.arrays;
        let mut logits = vec![0.0; self.n_outputs()];
        affine(&p[PI_W].values, &p[PI_B].values, hidden, &mut logits);
        let value = dot(&p[V_W].values, hidden) + p[V_B].values[0];
        (logits, value)
    }

    pub fn output_from_logits(&self, logits: &[f64]) -> PolicyOutput {
        match self.mode {
            Mode::Mono => PolicyOutput::Mono(
                log_softmax(logits)
                    .into_iter()
                    .map(|lp| lp.exp().clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
                    .collect(),
            ),
            Mode::Poly => PolicyOutput::Poly(
                logits
                    .iter()
                    .map(|&z| sigmoid(z).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
                    .collect(),
            ),
        }
    }
}

/// Action distribution for one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolicyOutput {
    /// Probabilities over K keys plus a final "play nothing" entry.
    Mono(Vec<f64>),
    /// Independent press probability per key.
    Poly(Vec<f64>),
}

impl PolicyOutput {
    pub fn keys(&self) -> usize {
        match self {
            PolicyOutput::Mono(p) => p.len().saturating_sub(1),
            PolicyOutput::Poly(p) => p.len(),
        }
    }

    pub fn entropy(&self) -> f64 {
        let xlx = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
        match self {
            PolicyOutput::Mono(p) => -p.iter().map(|&q| xlx(q)).sum::<f64>(),
            PolicyOutput::Poly(p) => -p.iter().map(|&q| xlx(q) + xlx(1.0 - q)).sum::<f64>(),
        }
    }

    /// `log π(action)` under this distribution.
    pub fn log_prob(&self, action: &[bool]) -> Result<f64> {
        match self {
            PolicyOutput::Mono(p) => Ok(p[mono_index(action, p.len() - 1)?].ln()),
            PolicyOutput::Poly(p) => {
                if action.len() != p.len() {
                    return Err(Error::domain("action length differs from key count"));
                }
                Ok(p.iter()
                    .zip(action)
                    .map(|(&q, &a)| if a { q.ln() } else { (1.0 - q).ln() })
                    .sum())
            }
        }
    }
}

/// Index of a single-key action; `keys` stands for "no key".
pub fn mono_index(action: &[bool], keys: usize) -> Result<usize> {
    if action.len() != keys {
        return Err(Error::domain("action length differs from key count"));
    }
    let mut pressed = action.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i);
    match (pressed.next(), pressed.next()) {
        (None, _) => Ok(keys),
        (Some(i), None) => Ok(i),
        _ => Err(Error::domain("single-key policy cannot press several keys")),
    }
}

pub fn mono_action(index: usize, keys: usize) -> ActionVector {
    (0..keys).map(|k| k == index).collect()
}

/// Probabilities and value estimate for one flattened state.
pub fn policy_forward(
    model: &Model,
    params: &ParamSet,
    state: &[f64],
) -> Result<(PolicyOutput, f64)> {
    let hidden = model.hidden(params, state)?;
    let (logits, value) = model.heads(params, &hidden);
    Ok((model.output_from_logits(&logits), value))
}

/// Draws an action and returns it with its log-probability.
pub fn sample_action<R: Rng + ?Sized>(output: &PolicyOutput, rng: &mut R) -> (ActionVector, f64) {
    let keys = output.keys();
    match output {
        PolicyOutput::Mono(p) => {
            let u: f64 = rng.random();
            let total: f64 = p.iter().sum();
            let mut acc = 0.0;
            let mut choice = p.len() - 1;
            for (i, &q) in p.iter().enumerate() {
                acc += q / total;
                if u < acc && q > 0.0 {
                    choice = i;
                    break;
                }
            }
            (mono_action(choice, keys), p[choice].ln())
        }
        PolicyOutput::Poly(p) => {
            let action: Vec<bool> = p.iter().map(|&q| rng.random::<f64>() < q).collect();
            let lp = output.log_prob(&action).expect("length matches by construction");
            (action, lp)
        }
    }
}

/// Most probable action: argmax for a single key, `p > 0.5` per key otherwise.
pub fn greedy_action(output: &PolicyOutput) -> ActionVector {
    let keys = output.keys();
    match output {
        PolicyOutput::Mono(p) => {
            let best = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map_or(keys, |(i, _)| i);
            mono_action(best, keys)
        }
        PolicyOutput::Poly(p) => p.iter().map(|&q| q > 0.5).collect(),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}
