//! Policies, value function and their training.

pub mod a2c;
pub mod adam;
pub mod checkpoint;
pub(crate) mod linalg;
pub mod model;
pub mod params;
pub mod reinforce;

pub use a2c::{
    action_rng, episode_seed, evaluate, rollout, train_a2c, EpisodeRecord, Selection, TrainOutcome,
};
pub use adam::adam_step;
pub use checkpoint::Checkpoint;
pub use model::{
    greedy_action, policy_forward, sample_action, Mode, Model, PolicyOutput,
};
pub use params::{Grads, Group, Hyperparams, ParamArray, ParamSet};
pub use reinforce::{compute_returns, reinforce_grad, reinforce_grad_batch, Trajectory};
