//! Episode rollouts and synchronous advantage actor-critic training.
//!
//! Every batch, `n_workers` environments each play one full episode with the
//! same parameter snapshot. Their gradients are summed in worker order and a
//! single Adam step is applied, so results do not depend on thread timing.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::adam_step;
use super::model::{greedy_action, policy_forward, sample_action, Model};
use super::params::{Grads, Hyperparams, ParamSet};
use super::reinforce::{reinforce_grad, Trajectory};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::features::flatten_into;
use crate::metrics::FrameCounts;
use crate::runlog::{RunLog, RunRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Sample,
    Greedy,
}

/// What one episode looked like, for logging and export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub mean_reward: f64,
    pub counts: FrameCounts,
    pub entropy_mean: f64,
    /// Agent keyboard after each action.
    pub keyboard: Vec<Vec<bool>>,
    pub truth: Vec<Vec<bool>>,
}

impl EpisodeRecord {
    pub fn row(&self, wall_seconds: f64) -> RunRow {
        let prf = self.counts.prf();
        RunRow {
            episode: self.episode,
            seed: self.seed,
            mean_reward: self.mean_reward,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            entropy: self.entropy_mean,
            wall_seconds,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// World seed of episode `episode` in a run seeded with `run_seed`.
pub fn episode_seed(run_seed: u64, episode: usize) -> u64 {
    splitmix64(run_seed ^ splitmix64(2 * episode as u64))
}

/// Action-sampling generator of episode `episode`.
pub fn action_rng(run_seed: u64, episode: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(run_seed ^ splitmix64(2 * episode as u64 + 1)))
}

/// Plays one episode with fixed parameters.
pub fn rollout<R: Rng + ?Sized>(
    env: &mut Env,
    model: &Model,
    params: &ParamSet,
    world_seed: u64,
    rng: &mut R,
    selection: Selection,
) -> Result<(Trajectory, EpisodeRecord)> {
    let mut traj = Trajectory::new(model.layout);
    let mut counts = FrameCounts::default();
    let mut keyboard = Vec::new();
    let mut truth = Vec::new();
    let mut entropy = 0.0;
    let mut state = Vec::with_capacity(model.layout.len());

    let mut current = env.reset(world_seed)?;
    loop {
        flatten_into(&current.state, &mut state);
        let (output, value) = policy_forward(model, params, &state)?;
        entropy += output.entropy();
        let (action, log_prob) = match selection {
            Selection::Sample => sample_action(&output, rng),
            Selection::Greedy => {
                let a = greedy_action(&output);
                let lp = output.log_prob(&a)?;
                (a, lp)
            }
        };
        let next = env.step(&action)?;
        if !next.reward.is_finite() {
            return Err(Error::Numeric { what: "reward", step: traj.len() });
        }
        counts.update(&action, &next.truth_frame)?;
        traj.push(&state, action.clone(), next.reward, log_prob, value);
        keyboard.push(action);
        truth.push(next.truth_frame.clone());
        if next.done {
            break;
        }
        current = next;
    }
    let steps = traj.len().max(1) as f64;
    let record = EpisodeRecord {
        episode: 0,
        seed: world_seed,
        mean_reward: traj.rewards.iter().sum::<f64>() / steps,
        counts,
        entropy_mean: entropy / steps,
        keyboard,
        truth,
    };
    Ok((traj, record))
}

pub struct TrainOutcome {
    pub params: ParamSet,
    pub log: RunLog,
    /// Episode with the highest mean reward.
    pub best: Option<EpisodeRecord>,
}

/// Synchronous A2C. `env_factory(worker)` builds each worker's environment
/// once; environments are reset with per-episode seeds derived from `seed`.
/// `on_episode` sees every finished episode in order.
pub fn train_a2c<F>(
    env_factory: F,
    model: &Model,
    mut params: ParamSet,
    hyper: &Hyperparams,
    episodes: usize,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeRecord, &RunRow),
) -> Result<TrainOutcome>
where
    F: Fn(usize) -> Result<Env>,
{
    hyper.validate()?;
    model.check_params(&params)?;
    let mut log = RunLog::default();
    let mut best: Option<EpisodeRecord> = None;
    if episodes == 0 {
        return Ok(TrainOutcome { params, log, best });
    }
    let workers = hyper.n_workers.min(episodes);
    let mut envs = (0..workers).map(&env_factory).collect::<Result<Vec<_>>>()?;
    for env in &envs {
        if env.layout() != model.layout {
            return Err(Error::domain("environment layout differs from the model layout"));
        }
    }
    let start = Instant::now();
    let mut first = 0;
    while first < episodes {
        let batch = workers.min(episodes - first);
        let snapshot = &params;
        let results: Vec<Result<(Grads, EpisodeRecord)>> = envs[..batch]
            .par_iter_mut()
            .enumerate()
            .map(|(w, env)| {
                let episode = first + w;
                let mut run = || -> Result<(Grads, EpisodeRecord)> {
                    let mut rng = action_rng(seed, episode);
                    let world = episode_seed(seed, episode);
                    let (traj, mut record) =
                        rollout(env, model, snapshot, world, &mut rng, Selection::Sample)?;
                    record.episode = episode;
                    let grads = reinforce_grad(&traj, model, snapshot, hyper)?;
                    Ok((grads, record))
                };
                run().map_err(|e| Error::Worker { worker: w, msg: e.to_string() })
            })
            .collect();

        let mut total = params.zero_grads();
        let mut records = Vec::with_capacity(batch);
        for r in results {
            let (g, rec) = r?;
            total += &g;
            records.push(rec);
        }
        adam_step(&mut params, &total, hyper)?;

        let elapsed = start.elapsed().as_secs_f64();
        for rec in records {
            let row = rec.row(elapsed);
            on_episode(&rec, &row);
            log.push(row);
            if best.as_ref().is_none_or(|b| rec.mean_reward > b.mean_reward) {
                best = Some(rec);
            }
        }
        first += batch;
    }
    Ok(TrainOutcome { params, log, best })
}

/// Runs episodes without learning. Greedy selection unless `selection` says otherwise.
pub fn evaluate(
    env: &mut Env,
    model: &Model,
    params: &ParamSet,
    episodes: usize,
    seed: u64,
    selection: Selection,
) -> Result<(RunLog, Vec<EpisodeRecord>)> {
    let start = Instant::now();
    let mut log = RunLog::default();
    let mut records = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut rng = action_rng(seed, episode);
        let (_, mut rec) = rollout(env, model, params, episode_seed(seed, episode), &mut rng, selection)?;
        rec.episode = episode;
        log.push(rec.row(start.elapsed().as_secs_f64()));
        records.push(rec);
    }
    Ok((log, records))
}
