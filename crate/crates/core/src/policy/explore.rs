use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::index::ActionId;
use crate::{Error, Result};

/// Exploration applied on top of the greedy policy for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Exploration {
    pub epsilon: f64,
    /// Per-dimension standard deviation of the proto-action noise.
    pub noise_std: Vec<f64>,
}

impl Exploration {
    pub fn none() -> Self {
        Exploration {
            epsilon: 0.0,
            noise_std: Vec::new(),
        }
    }

    pub fn epsilon_only(epsilon: f64) -> Self {
        Exploration {
            epsilon,
            noise_std: Vec::new(),
        }
    }

    /// With probability ε, a uniform draw from `support` (or from all
    /// `num_actions` ids).
    pub fn random_jump<R: Rng + ?Sized>(
        &self,
        support: Option<&[ActionId]>,
        num_actions: usize,
        rng: &mut R,
    ) -> Result<Option<ActionId>> {
        if self.epsilon <= 0.0 || rng.random::<f64>() >= self.epsilon {
            return Ok(None);
        }
        match support {
            Some([]) => Err(Error::invalid("exploration support is empty")),
            Some(ids) => Ok(Some(ids[rng.random_range(0..ids.len())])),
            None if num_actions == 0 => Err(Error::EmptyActionSet),
            None => Ok(Some(ActionId::from(rng.random_range(0..num_actions)))),
        }
    }

    pub fn perturb<R: Rng + ?Sized>(&self, proto: &mut [f64], rng: &mut R) {
        if self.noise_std.iter().all(|s| *s == 0.0) {
            return;
        }
        for (p, s) in proto.iter_mut().zip(&self.noise_std) {
            let z: f64 = StandardNormal.sample(rng);
            *p += s * z;
        }
    }
}

/// Linear ε annealing from `start` to `end` over `anneal_steps` steps, then flat.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        EpsilonSchedule {
            start: epsilon,
            end: epsilon,
            anneal_steps: 0,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.anneal_steps {
            return self.end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}
