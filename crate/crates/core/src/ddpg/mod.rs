//! DDPG training of a Wolpertinger policy: replay, critic regression toward
//! full-policy Bellman targets, actor ascent at the proto-action, soft target
//! updates.

mod checkpoint;
mod replay;
mod trainer;
mod update;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, CheckpointManifest};
pub use replay::{ReplayBuffer, Transition};
pub use trainer::{evaluate, EpisodeRecord, Trainer, TrainingLog, UpdateTrace};
pub use update::{actor_gradient, actor_update, critic_loss_gradient, critic_targets, critic_update, ActionPenalty};

use crate::index::ActionIndex;
use crate::nn::{soft_update, Activation, Adam, AdamConfig, Mlp, OutputActivation};
use crate::policy::{KSpec, Refinement, Wolpertinger};
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub minibatch_size: usize,
    pub buffer_capacity: usize,
    /// No updates until this many transitions are stored (and never before a
    /// full minibatch is available).
    pub warmup: usize,
    /// Episode limit; `None` runs until `max_env_steps`.
    pub episodes: Option<usize>,
    pub steps_per_episode: usize,
    pub max_env_steps: u64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of `max_env_steps` over which ε is annealed linearly.
    pub epsilon_anneal_fraction: f64,
    /// Proto-action noise standard deviation as a share of each embedding
    /// dimension's extent.
    pub noise_process: f64,
    /// Candidate count for the target policy; defaults to the behavior `k`.
    pub target_k: Option<KSpec>,
    /// Draw ε-exploration from the environment's suggested subset when it has one.
    pub guided_exploration: bool,
    /// Weight of the squared distance of proto-actions from the middle of the
    /// action box, in half-widths, subtracted from the actor objective.
    pub action_penalty: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            tau: 0.001,
            minibatch_size: 64,
            buffer_capacity: 100_000,
            warmup: 1000,
            episodes: None,
            steps_per_episode: 1000,
            max_env_steps: 50_000,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            hidden: vec![64, 64],
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_fraction: 0.2,
            noise_process: 0.1,
            target_k: None,
            guided_exploration: false,
            action_penalty: 0.0,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.minibatch_size == 0 {
            return Err(Error::invalid("minibatch_size must be at least 1"));
        }
        if self.buffer_capacity < self.minibatch_size {
            return Err(Error::invalid("buffer_capacity must hold at least one minibatch"));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_anneal_fraction) {
            return Err(Error::invalid("epsilon_anneal_fraction must lie in [0, 1]"));
        }
        if !(self.noise_process >= 0.0 && self.noise_process.is_finite()) {
            return Err(Error::invalid("noise_process must be non-negative"));
        }
        if !(self.action_penalty >= 0.0 && self.action_penalty.is_finite()) {
            return Err(Error::invalid("action_penalty must be non-negative"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }
}

/// Online and target networks with their optimizers and the shared index.
#[derive(Clone, Debug)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub index: Arc<ActionIndex>,
    pub k: usize,
    pub target_k: usize,
    pub refinement: Refinement,
}

impl Agent {
    /// Fresh networks: the actor squashes into the bounding box of the action
    /// embeddings; the critic reads `[state; action]` and has a linear output.
    pub fn new(state_dim: usize, index: Arc<ActionIndex>, k: usize, target_k: usize, config: &TrainerConfig) -> Result<Self> {
        let n = index.actions().dim();
        let (low, high) = index.actions().bounding_box();
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(n);
        let mut critic_sizes = vec![state_dim + n];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(
            &actor_sizes,
            Activation::Relu,
            OutputActivation::squash_to_box(&low, &high),
            &mut rng::stream(config.seed, rng::streams::ACTOR_INIT),
        )?;
        let critic = Mlp::new(
            &critic_sizes,
            Activation::Relu,
            OutputActivation::Identity,
            &mut rng::stream(config.seed, rng::streams::CRITIC_INIT),
        )?;
        if k == 0 || target_k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(Agent {
            actor_opt: Adam::new(&actor, AdamConfig::with_lr(config.actor_lr)),
            critic_opt: Adam::new(&critic, AdamConfig::with_lr(config.critic_lr)),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            k: k.min(index.len()),
            target_k: target_k.min(index.len()),
            index,
            refinement: Refinement::On,
        })
    }

    pub fn with_refinement(mut self, refinement: Refinement) -> Self {
        self.refinement = refinement;
        self
    }

    pub fn policy(&self) -> Result<Wolpertinger<'_>> {
        Ok(Wolpertinger::new(&self.actor, &self.critic, &self.index, self.k)?.with_refinement(self.refinement))
    }

    pub fn target_policy(&self) -> Result<Wolpertinger<'_>> {
        Ok(Wolpertinger::new(&self.target_actor, &self.target_critic, &self.index, self.target_k)?
            .with_refinement(self.refinement))
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        soft_update(&mut self.target_actor, &self.actor, tau)?;
        soft_update(&mut self.target_critic, &self.critic, tau)
    }
}
