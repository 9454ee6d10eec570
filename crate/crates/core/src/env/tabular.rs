//! Small deterministic MDPs with exact solutions, for checking learners.
//!
//! States are observed as one-hot vectors. Actions are points evenly spaced on
//! `[-1, 1]`.

use std::sync::Arc;

use super::{EnvStep, Environment};
use crate::index::{ActionId, ActionSet};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// `next[s * num_actions + a]`
    next: Vec<usize>,
    reward: Vec<f64>,
    terminal: Vec<bool>,
    start: usize,
    max_steps: usize,
    actions: Arc<ActionSet>,
    current: usize,
    steps: usize,
    done: bool,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        next: Vec<usize>,
        reward: Vec<f64>,
        terminal: Vec<bool>,
        start: usize,
        max_steps: usize,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("MDP needs at least one state and one action"));
        }
        Error::check_dim("transition table", num_states * num_actions, next.len())?;
        Error::check_dim("reward table", num_states * num_actions, reward.len())?;
        Error::check_dim("terminal flags", num_states, terminal.len())?;
        if next.iter().any(|&s| s >= num_states) || start >= num_states {
            return Err(Error::invalid("state index out of range"));
        }
        let points = if num_actions == 1 {
            vec![0.0]
        } else {
            (0..num_actions)
                .map(|i| -1.0 + 2.0 * i as f64 / (num_actions - 1) as f64)
                .collect()
        };
        Ok(TabularMdp {
            num_states,
            num_actions,
            next,
            reward,
            terminal,
            start,
            max_steps: max_steps.max(1),
            actions: Arc::new(ActionSet::from_flat(1, points)?),
            current: start,
            steps: 0,
            done: false,
        })
    }

    /// Two states, two actions; action `a` moves to state `a` and every step
    /// pays 1. Nothing terminates, so `Q = 1/(1-γ)` everywhere.
    pub fn two_state(max_steps: usize) -> Self {
        Self::new(2, 2, vec![0, 1, 0, 1], vec![1.0; 4], vec![false; 2], 0, max_steps)
            .expect("valid two-state MDP")
    }

    /// Chain of `n` states with actions left, right, stay and back-to-start
    /// (ids 0, 2, 1, 3 respectively, so the useful action is interior). Each
    /// step costs 1; entering the last state pays 10 and terminates.
    pub fn chain(n: usize, max_steps: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("chain needs at least 2 states"));
        }
        let mut next = Vec::with_capacity(n * 4);
        let mut reward = Vec::with_capacity(n * 4);
        for s in 0..n {
            for target in [s.saturating_sub(1), s, (s + 1).min(n - 1), 0] {
                next.push(target);
                reward.push(if target == n - 1 && s != n - 1 { 10.0 } else { -1.0 });
            }
        }
        let mut terminal = vec![false; n];
        terminal[n - 1] = true;
        Self::new(n, 4, next, reward, terminal, 0, max_steps)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn state(&self) -> usize {
        self.current
    }

    fn observe(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.num_states];
        v[self.current] = 1.0;
        v
    }

    pub fn one_hot(&self, state: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_states];
        v[state] = 1.0;
        v
    }

    /// Optimal discounted action values `Q[s * num_actions + a]` by value iteration.
    pub fn optimal_q(&self, gamma: f64, tolerance: f64) -> Vec<f64> {
        let na = self.num_actions;
        let mut q = vec![0.0; self.num_states * na];
        loop {
            let v: Vec<f64> = (0..self.num_states)
                .map(|s| {
                    if self.terminal[s] {
                        0.0
                    } else {
                        q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    }
                })
                .collect();
            let mut delta: f64 = 0.0;
            for i in 0..q.len() {
                let updated = self.reward[i] + gamma * v[self.next[i]];
                delta = delta.max((updated - q[i]).abs());
                q[i] = updated;
            }
            if delta < tolerance {
                return q;
            }
        }
    }

    /// Best undiscounted return from the start state within the step limit.
    pub fn optimal_return(&self) -> f64 {
        let na = self.num_actions;
        let mut v = vec![0.0; self.num_states];
        for _ in 0..self.max_steps {
            v = (0..self.num_states)
                .map(|s| {
                    if self.terminal[s] {
                        return 0.0;
                    }
                    (0..na)
                        .map(|a| self.reward[s * na + a] + v[self.next[s * na + a]])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
        }
        v[self.start]
    }
}

impl Environment for TabularMdp {
    fn observation_dim(&self) -> usize {
        self.num_states
    }

    fn action_set(&self) -> &Arc<ActionSet> {
        &self.actions
    }

    fn reset(&mut self) -> Vec<f64> {
        self.current = self.start;
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: ActionId) -> Result<EnvStep> {
        if self.done {
            return Err(Error::EpisodeOver);
        }
        let a = action.index();
        if a >= self.num_actions {
            return Err(Error::invalid(format!("action {action} out of range")));
        }
        let i = self.current * self.num_actions + a;
        self.current = self.next[i];
        self.steps += 1;
        let terminal = self.terminal[self.current];
        let truncated = !terminal && self.steps >= self.max_steps;
        self.done = terminal || truncated;
        Ok(EnvStep {
            observation: self.observe(),
            reward: self.reward[i],
            terminal,
            truncated,
        })
    }

    fn fork(&self, _seed: u64) -> Self {
        let mut env = self.clone();
        env.reset();
        env
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_values() {
        let mdp = TabularMdp::two_state(50);
        for q in mdp.optimal_q(0.9, 1e-12) {
            assert!((q - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn chain_optimum() {
        let mut mdp = TabularMdp::chain(5, 20).unwrap();
        assert_eq!(mdp.optimal_return(), 7.0);
        mdp.reset();
        let mut total = 0.0;
        loop {
            let s = mdp.step(ActionId(2)).unwrap();
            total += s.reward;
            if s.done() {
                assert!(s.terminal);
                break;
            }
        }
        assert_eq!(total, 7.0);
    }

    #[test]
    fn truncation_and_episode_end() {
        let mut mdp = TabularMdp::two_state(2);
        mdp.reset();
        assert!(!mdp.step(ActionId(1)).unwrap().done());
        let s = mdp.step(ActionId(0)).unwrap();
        assert!(s.truncated && !s.terminal);
        assert!(mdp.step(ActionId(0)).is_err());
    }

    #[test]
    fn action_points() {
        let mdp = TabularMdp::chain(3, 5).unwrap();
        let pts: Vec<f64> = mdp.action_set().rows().map(|r| r[0]).collect();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0], -1.0);
        assert_eq!(pts[3], 1.0);
    }
}
