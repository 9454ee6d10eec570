use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{actor_gradient, critic_targets, critic_update, ActionPenalty, Agent, ReplayBuffer, TrainerConfig, Transition};
use crate::env::Environment;
use crate::index::ActionId;
use crate::nn::Mlp;
use crate::policy::{EpsilonSchedule, Exploration};
use crate::{par, rng, Error, Result};

/// One finished training episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Environment steps taken so far, this episode included.
    pub env_steps: u64,
    #[serde(rename = "return")]
    pub episode_return: f64,
    /// ε in effect at the episode's last step.
    pub epsilon: f64,
    pub critic_loss_mean: Option<f64>,
    pub actor_grad_norm_mean: Option<f64>,
    /// Wall-clock throughput; the only field that varies between identical runs.
    pub steps_per_sec: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
}

impl TrainingLog {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record([
            "episode",
            "env_steps",
            "return",
            "epsilon",
            "critic_loss_mean",
            "actor_grad_norm_mean",
            "steps_per_sec",
        ])?;
        for r in &self.episodes {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let episodes = rd.deserialize().collect::<std::result::Result<Vec<EpisodeRecord>, _>>()?;
        Ok(TrainingLog { episodes })
    }

    /// Median of the per-episode throughput.
    pub fn median_steps_per_sec(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.episodes.iter().map(|e| e.steps_per_sec).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
    }
}

/// What one update consumed, for inspection in tests.
#[derive(Clone, Debug)]
pub struct UpdateTrace {
    pub env_steps: u64,
    pub batch: Vec<Transition>,
    /// Action vectors the critic was trained on, aligned with `batch`.
    pub critic_actions: Vec<Vec<f64>>,
    /// Points where the critic's action-gradient was taken for the actor step.
    pub actor_gradient_points: Vec<Vec<f64>>,
    /// Actor parameters at the time of the actor step.
    pub actor_before: Mlp,
}

type Inspector = Box<dyn FnMut(&UpdateTrace) + Send>;

#[derive(Default)]
struct EpisodeAccumulator {
    reward: f64,
    steps: usize,
    loss_sum: f64,
    grad_sum: f64,
    updates: usize,
    started: Option<Instant>,
}

/// The training loop over one environment. Training state, including a
/// half-finished episode, survives between [`Trainer::advance`] calls, and the
/// log stays readable after an error.
pub struct Trainer<E: Environment> {
    env: E,
    agent: Agent,
    config: TrainerConfig,
    buffer: ReplayBuffer,
    schedule: EpsilonSchedule,
    noise_std: Vec<f64>,
    penalty: Option<ActionPenalty>,
    explore_rng: rng::Rng,
    replay_rng: rng::Rng,
    env_steps: u64,
    updates: u64,
    state: Option<Vec<f64>>,
    current: EpisodeAccumulator,
    log: TrainingLog,
    inspector: Option<Inspector>,
}

impl<E: Environment> Trainer<E> {
    pub fn new(env: E, agent: Agent, config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        Error::check_dim("actor input", env.observation_dim(), agent.actor.input_size())?;
        Error::check_dim("action dimension", env.action_set().dim(), agent.index.actions().dim())?;
        Error::check_dim("action count", env.action_set().len(), agent.index.len())?;
        let (low, high) = agent.index.actions().bounding_box();
        let noise_std = low.iter().zip(&high).map(|(l, h)| config.noise_process * (h - l)).collect();
        let anneal = (config.max_env_steps as f64 * config.epsilon_anneal_fraction).round() as u64;
        Ok(Trainer {
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            schedule: EpsilonSchedule {
                start: config.epsilon_start,
                end: config.epsilon_end,
                anneal_steps: anneal,
            },
            noise_std,
            penalty: (config.action_penalty > 0.0).then(|| ActionPenalty::for_box(config.action_penalty, &low, &high)),
            explore_rng: rng::stream(config.seed, rng::streams::EXPLORE),
            replay_rng: rng::stream(config.seed, rng::streams::REPLAY),
            env,
            agent,
            config,
            env_steps: 0,
            updates: 0,
            state: None,
            current: EpisodeAccumulator::default(),
            log: TrainingLog::default(),
            inspector: None,
        })
    }

    pub fn set_inspector(&mut self, f: impl FnMut(&UpdateTrace) + Send + 'static) {
        self.inspector = Some(Box::new(f));
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn into_agent(self) -> Agent {
        self.agent
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn finished(&self) -> bool {
        self.config.steps_per_episode == 0
            || self.env_steps >= self.config.max_env_steps
            || self.config.episodes.is_some_and(|m| self.log.len() >= m)
    }

    /// Runs until the step budget or episode limit is used up.
    pub fn train(&mut self) -> Result<&TrainingLog> {
        let remaining = self.config.max_env_steps.saturating_sub(self.env_steps);
        self.advance(remaining)?;
        Ok(&self.log)
    }

    /// Takes up to `steps` environment steps, stopping early when training is finished.
    pub fn advance(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            if self.finished() {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    fn step(&mut self) -> Result<()> {
        let state = match self.state.take() {
            Some(s) => s,
            None => {
                self.current = EpisodeAccumulator {
                    started: Some(Instant::now()),
                    ..Default::default()
                };
                self.env.reset()
            }
        };
        let epsilon = self.schedule.value(self.env_steps);
        let exploration = Exploration {
            epsilon,
            noise_std: self.noise_std.clone(),
        };
        let support = if self.config.guided_exploration {
            self.env.exploration_support()
        } else {
            None
        };
        let action: ActionId = self
            .agent
            .policy()?
            .select_action_explore(&state, &exploration, support, &mut self.explore_rng)?
            .chosen;
        let outcome = self.env.step(action)?;
        self.env_steps += 1;
        self.current.reward += outcome.reward;
        self.current.steps += 1;
        let done = outcome.done() || self.current.steps >= self.config.steps_per_episode;
        self.buffer.push(Transition {
            embedding: self.agent.index.actions().get(action).to_vec(),
            state,
            action,
            reward: outcome.reward,
            next_state: outcome.observation.clone(),
            terminal: outcome.terminal,
        });
        if self.buffer.len() >= self.config.warmup.max(self.config.minibatch_size) {
            self.learn()?;
        }
        if done {
            self.close_episode(epsilon);
        } else {
            self.state = Some(outcome.observation);
        }
        Ok(())
    }

    fn learn(&mut self) -> Result<()> {
        let batch = self.buffer.sample(self.config.minibatch_size, &mut self.replay_rng)?;
        let agent = &mut self.agent;
        let targets = critic_targets(&batch, &agent.target_policy()?, self.config.gamma)?;
        let loss = critic_update(&mut agent.critic, &mut agent.critic_opt, &batch, &targets)?;
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let (mut grads, points) = actor_gradient(&agent.actor, &agent.critic, &states, self.penalty.as_ref())?;
        let norm = grads.param_norm();
        if let Some(inspect) = self.inspector.as_mut() {
            inspect(&UpdateTrace {
                env_steps: self.env_steps,
                critic_actions: batch.iter().map(|t| t.embedding.clone()).collect(),
                batch: batch.iter().map(|t| (*t).clone()).collect(),
                actor_gradient_points: points,
                actor_before: agent.actor.clone(),
            });
        }
        grads.scale(-1.0);
        agent.actor_opt.step(&mut agent.actor, &grads)?;
        agent.soft_update_targets(self.config.tau)?;
        self.updates += 1;
        self.current.loss_sum += loss;
        self.current.grad_sum += norm;
        self.current.updates += 1;
        Ok(())
    }

    fn close_episode(&mut self, epsilon: f64) {
        let c = std::mem::take(&mut self.current);
        let secs = c.started.map_or(0.0, |t| t.elapsed().as_secs_f64());
        let mean = |sum: f64| (c.updates > 0).then(|| sum / c.updates as f64);
        self.log.episodes.push(EpisodeRecord {
            episode: self.log.len(),
            env_steps: self.env_steps,
            episode_return: c.reward,
            epsilon,
            critic_loss_mean: mean(c.loss_sum),
            actor_grad_norm_mean: mean(c.grad_sum),
            steps_per_sec: if secs > 0.0 { c.steps as f64 / secs } else { 0.0 },
        });
    }
}

/// Greedy returns of the frozen policy over `episodes` independent episodes,
/// each on a fork of `env` seeded from `seed` and the episode number.
pub fn evaluate<E: Environment + Sync>(
    agent: &Agent,
    env: &E,
    episodes: usize,
    max_steps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let policy = agent.policy()?;
    let results = par::map((0..episodes).collect(), |i| -> Result<f64> {
        let mut e = env.fork(rng::derive_seed(seed, i as u64));
        let mut state = e.reset();
        let mut total = 0.0;
        for _ in 0..max_steps {
            let d = policy.select_action(&state)?;
            let s = e.step(d.chosen)?;
            total += s.reward;
            if s.done() {
                break;
            }
            state = s.observation;
        }
        Ok(total)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use std::sync::{Arc, Mutex};

    use super::*;
    use crate::env::TabularMdp;
    use crate::index::ActionIndex;
    use crate::nn::snapshot::snapshot_bytes;

    fn small_config() -> TrainerConfig {
        TrainerConfig {
            minibatch_size: 8,
            warmup: 8,
            max_env_steps: 300,
            hidden: vec![8],
            ..Default::default()
        }
    }

    fn trainer(config: TrainerConfig) -> Trainer<TabularMdp> {
        let env = TabularMdp::chain(5, 20).unwrap();
        let index = Arc::new(ActionIndex::exact(env.action_set().clone()).unwrap());
        let agent = Agent::new(5, index, 4, 4, &config).unwrap();
        Trainer::new(env, agent, config).unwrap()
    }

    #[test]
    fn zero_length_episodes_do_nothing() {
        let mut t = trainer(TrainerConfig {
            steps_per_episode: 0,
            ..small_config()
        });
        let before = snapshot_bytes(&t.agent().actor);
        assert!(t.train().unwrap().is_empty());
        assert_eq!(snapshot_bytes(&t.agent().actor), before);
        assert_eq!(t.env_steps(), 0);
    }

    #[test]
    fn runs_are_reproducible() {
        let run = || {
            let mut t = trainer(small_config());
            t.train().unwrap();
            let strip = |r: &EpisodeRecord| EpisodeRecord {
                steps_per_sec: 0.0,
                ..r.clone()
            };
            (
                t.log().episodes.iter().map(strip).collect::<Vec<_>>(),
                snapshot_bytes(&t.agent().critic),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn no_updates_before_warmup() {
        let mut t = trainer(TrainerConfig {
            warmup: 50,
            ..small_config()
        });
        t.advance(49).unwrap();
        assert_eq!(t.updates(), 0);
        t.advance(1).unwrap();
        assert_eq!(t.updates(), 1);
    }

    #[test]
    fn updates_use_stored_actions_and_current_proto_actions() {
        let mut t = trainer(TrainerConfig {
            max_env_steps: 100,
            warmup: 8,
            ..small_config()
        });
        let actions = t.env().action_set().clone();
        let checked = Arc::new(Mutex::new(0usize));
        let counter = checked.clone();
        t.set_inspector(move |trace| {
            for (tr, a) in trace.batch.iter().zip(&trace.critic_actions) {
                assert_eq!(a.as_slice(), actions.get(tr.action));
                assert_eq!(a, &tr.embedding);
            }
            for (tr, p) in trace.batch.iter().zip(&trace.actor_gradient_points) {
                assert_eq!(&trace.actor_before.forward(&tr.state).unwrap(), p);
            }
            *counter.lock().unwrap() += 1;
        });
        t.train().unwrap();
        assert_eq!(*checked.lock().unwrap() as u64, t.updates());
        assert_eq!(t.updates(), 100 - 7);
    }

    #[test]
    fn training_log_csv_roundtrip() {
        let mut t = trainer(small_config());
        t.train().unwrap();
        let mut buf = Vec::new();
        t.log().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "episode,env_steps,return,epsilon,critic_loss_mean,actor_grad_norm_mean,steps_per_sec\n"
        ));
        assert_eq!(&TrainingLog::read_csv(buf.as_slice()).unwrap(), t.log());
    }

    #[test]
    fn evaluation_leaves_parameters_alone() {
        let t = trainer(small_config());
        let before = snapshot_bytes(&t.agent().actor);
        let returns = evaluate(t.agent(), t.env(), 4, 20, 1).unwrap();
        assert_eq!(returns.len(), 4);
        assert_eq!(snapshot_bytes(&t.agent().actor), before);
    }
}
