//! Wolpertinger policies for reinforcement learning in large discrete action
//! spaces.
//!
//! An actor network emits a continuous *proto-action*, an approximate
//! nearest-neighbor index retrieves the `k` closest embedded discrete actions,
//! and a critic re-ranks those candidates. The actor and critic are trained
//! with DDPG. The crate also ships the benchmark environments used to exercise
//! the architecture (puddle world with n-step plans, a synthetic recommender,
//! discretized cart-pole swing-up, small tabular MDPs), an analytic and
//! Monte Carlo treatment of the expected-max-over-k model, and an experiment
//! harness that drives everything from JSON configs.

pub mod ddpg;
pub mod env;
mod error;
pub mod harness;
pub mod index;
pub mod lemma;
pub mod nn;
mod par;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
pub use index::{ActionId, ActionIndex, ActionSet, IndexConfig, Neighbor, Tier};
pub use nn::{Activation, Mlp, OutputActivation};
pub use policy::{KSpec, PolicyConfig, Wolpertinger};
