//! Benchmark environments behind one episodic interface.

pub mod cartpole;
pub mod puddle;
pub mod recommender;
pub mod tabular;

use std::sync::Arc;

use crate::index::{ActionId, ActionSet};
use crate::Result;

pub use cartpole::{CartPoleParams, CartPoleSwingUp};
pub use puddle::{Cell, Move, PuddleMap, PuddleWorld};
pub use recommender::RecommenderSim;
pub use tabular::TabularMdp;

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The episode reached a terminal state; no bootstrapping past it.
    pub terminal: bool,
    /// The episode was cut off by a step limit without reaching a terminal state.
    pub truncated: bool,
}

impl EnvStep {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Episodic environment over an embedded discrete action set.
///
/// An instance owns its random stream, so `reset`/`step` sequences are
/// reproducible given the construction seed and the actions taken.
pub trait Environment: Send {
    fn observation_dim(&self) -> usize;

    fn action_set(&self) -> &Arc<ActionSet>;

    fn reset(&mut self) -> Vec<f64>;

    fn step(&mut self, action: ActionId) -> Result<EnvStep>;

    /// Per-state subset for guided exploration, if the environment offers one.
    fn exploration_support(&self) -> Option<&[ActionId]> {
        None
    }

    /// Independent instance sharing static data, with its own random stream.
    fn fork(&self, seed: u64) -> Self
    where
        Self: Sized;
}

/// Any of the shipped environments, for runtime selection.
#[derive(Clone, Debug)]
pub enum AnyEnv {
    Puddle(PuddleWorld),
    Recommender(RecommenderSim),
    CartPole(CartPoleSwingUp),
    Tabular(TabularMdp),
}

macro_rules! dispatch {
    ($self:expr, $env:ident => $body:expr) => {
        match $self {
            AnyEnv::Puddle($env) => $body,
            AnyEnv::Recommender($env) => $body,
            AnyEnv::CartPole($env) => $body,
            AnyEnv::Tabular($env) => $body,
        }
    };
}

impl Environment for AnyEnv {
    fn observation_dim(&self) -> usize {
        dispatch!(self, e => e.observation_dim())
    }

    fn action_set(&self) -> &Arc<ActionSet> {
        dispatch!(self, e => e.action_set())
    }

    fn reset(&mut self) -> Vec<f64> {
        dispatch!(self, e => e.reset())
    }

    fn step(&mut self, action: ActionId) -> Result<EnvStep> {
        dispatch!(self, e => e.step(action))
    }

    fn exploration_support(&self) -> Option<&[ActionId]> {
        dispatch!(self, e => e.exploration_support())
    }

    fn fork(&self, seed: u64) -> Self {
        match self {
            AnyEnv::Puddle(e) => AnyEnv::Puddle(e.fork(seed)),
            AnyEnv::Recommender(e) => AnyEnv::Recommender(e.fork(seed)),
            AnyEnv::CartPole(e) => AnyEnv::CartPole(e.fork(seed)),
            AnyEnv::Tabular(e) => AnyEnv::Tabular(e.fork(seed)),
        }
    }
}
