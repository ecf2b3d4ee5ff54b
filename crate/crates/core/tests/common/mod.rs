//! Oracles shared by the integration suites and the acceptance run.
#![allow(dead_code)]

use playalong::agent::*;
use playalong::features::StateLayout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_model(rng: &mut ChaCha8Rng, mode: Mode) -> Model {
    let layout = StateLayout {
        n_bins: rng.random_range(1..=4),
        context: rng.random_range(0..=1),
        keys: rng.random_range(1..=3),
    };
    Model::new(mode, layout, 4 * rng.random_range(1..=2))
}

pub fn random_params(model: &Model, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut params = model.init_params(rng.random());
    for a in &mut params.arrays {
        a.values.iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
    }
    params
}

pub fn random_action(model: &Model, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let k = model.layout.keys;
    match model.mode {
        Mode::Mono => {
            let i = rng.random_range(0..=k);
            (0..k).map(|j| j == i).collect()
        }
        Mode::Poly => (0..k).map(|_| rng.random_bool(0.5)).collect(),
    }
}

/// Random states, actions and rewards; values and log-probs from `params`.
pub fn random_trajectory(model: &Model, params: &ParamSet, steps: usize, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut traj = Trajectory::new(model.layout);
    for _ in 0..steps {
        let state: Vec<f64> = (0..model.layout.len()).map(|_| rng.random_range(-1.0..2.0)).collect();
        let action = random_action(model, rng);
        let (out, value) = policy_forward(model, params, &state).unwrap();
        let lp = out.log_prob(&action).unwrap();
        traj.push(&state, action, rng.random_range(-1.0..1.0), lp, value);
    }
    traj
}

/// Horner evaluation of `Σ_k γ^k R_{t+k+1}` for every t.
pub fn brute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            let mut acc = 0.0;
            for k in (t..rewards.len()).rev() {
                acc = rewards[k] + gamma * acc;
            }
            acc
        })
        .collect()
}

/// Σ_t A_t ln π(A_t|S_t) + η H(π(·|S_t)) with A_t frozen from the trajectory.
pub fn policy_objective(model: &Model, params: &ParamSet, traj: &Trajectory, hyper: &Hyperparams) -> f64 {
    let returns = brute_returns(&traj.rewards, hyper.gamma);
    (0..traj.len())
        .map(|t| {
            let (out, _) = policy_forward(model, params, traj.state(t)).unwrap();
            let adv = returns[t] - traj.values[t];
            adv * out.log_prob(&traj.actions[t]).unwrap() + hyper.eta * out.entropy()
        })
        .sum()
}

/// ½ Σ_t (G_t − v(S_t))², with the value recomputed from `params`.
pub fn value_objective(model: &Model, params: &ParamSet, traj: &Trajectory, hyper: &Hyperparams) -> f64 {
    let returns = brute_returns(&traj.rewards, hyper.gamma);
    (0..traj.len())
        .map(|t| {
            let (_, v) = policy_forward(model, params, traj.state(t)).unwrap();
            0.5 * (returns[t] - v).powi(2)
        })
        .sum()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().chain(b).map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
    diff / scale
}

/// Compares `reinforce_grad` with central differences (step 1e-5) of the
/// policy and value objectives on `instances` random tiny problems.
/// Returns the worst relative error per array, or a description of the
/// first array above `tol`.
pub fn finite_difference_check(instances: usize, seed: u64, tol: f64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for instance in 0..instances {
        let mode = if instance % 2 == 0 { Mode::Mono } else { Mode::Poly };
        let model = tiny_model(&mut rng, mode);
        let params = random_params(&model, &mut rng);
        let hyper = Hyperparams {
            gamma: rng.random_range(0.0..1.0),
            eta: rng.random_range(0.0..0.5),
            ..Hyperparams::default()
        };
        let steps = rng.random_range(1..=3);
        let traj = random_trajectory(&model, &params, steps, &mut rng);
        let grads = reinforce_grad(&traj, &model, &params, &hyper).unwrap();

        for (i, arr) in params.arrays.iter().enumerate() {
            let objective = match arr.group {
                Group::Policy => policy_objective,
                Group::Value => value_objective,
            };
            let fd: Vec<f64> = (0..arr.len())
                .map(|j| {
                    let mut plus = params.clone();
                    plus.arrays[i].values[j] += h;
                    let mut minus = params.clone();
                    minus.arrays[i].values[j] -= h;
                    (objective(&model, &plus, &traj, &hyper) - objective(&model, &minus, &traj, &hyper)) / (2.0 * h)
                })
                .collect();
            let err = rel_err(&grads.arrays[i], &fd);
            worst = worst.max(err);
            if err > tol {
                return Err(format!(
                    "instance {instance} ({mode:?}) array {}: relative error {err:e}",
                    arr.name
                ));
            }
        }
    }
    Ok(worst)
}

// Reward oracles: normalise first, then accumulate.

pub fn l2_oracle(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += (x[i] - y[i]).powi(2);
    }
    -acc.sqrt()
}

pub fn l1_oracle(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc -= (x[i] - y[i]).abs();
    }
    acc
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn cosine_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (norm(x), norm(y));
    if nx < 1e-8 || ny < 1e-8 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += (x[i] / nx) * (y[i] / ny);
    }
    acc.min(1.0)
}

pub fn hellinger_oracle(u: &[f64], v: &[f64]) -> f64 {
    let (su, sv): (f64, f64) = (u.iter().sum(), v.iter().sum());
    if su < 1e-8 && sv < 1e-8 {
        return 0.0;
    }
    if su < 1e-8 || sv < 1e-8 {
        return 1.0;
    }
    let p: Vec<f64> = u.iter().map(|a| a / su).collect();
    let q: Vec<f64> = v.iter().map(|b| b / sv).collect();
    let mut acc = 0.0;
    for i in 0..p.len() {
        acc += (p[i].sqrt() - q[i].sqrt()).powi(2);
    }
    (0.5 * acc).sqrt().min(1.0)
}

pub fn combined_oracle(x: &[f64], y: &[f64]) -> f64 {
    cosine_oracle(x, y).max(1.0 - hellinger_oracle(x, y))
}
