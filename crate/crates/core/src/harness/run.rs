use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::ddpg::{evaluate, save_checkpoint, Agent, Trainer, TrainingLog};
use crate::env::{AnyEnv, Environment};
use crate::index::{ActionIndex, IndexConfig};
use crate::nn::snapshot::snapshot_bytes;
use crate::rng::{self, streams};
use crate::{Error, Result};

/// One greedy evaluation. Every field is a pure function of config and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub env_steps: u64,
    pub episodes_trained: usize,
    pub mean_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    /// Exact expected return of the greedy policy, where the environment
    /// allows computing it.
    pub expected_return: Option<f64>,
    pub optimal_return: Option<f64>,
    pub fraction_of_optimal: Option<f64>,
}

/// Wall-clock side of an evaluation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub env_steps: u64,
    pub wall_seconds: f64,
    pub median_steps_per_sec: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub evaluations: Vec<EvalRow>,
    pub timing: Vec<TimingRow>,
    pub log: TrainingLog,
    pub optimal_return: Option<f64>,
    pub k: usize,
    pub updates: u64,
}

impl RunMetrics {
    pub fn final_eval(&self) -> &EvalRow {
        self.evaluations.last().expect("a run always evaluates at least once")
    }

    pub fn final_return(&self) -> f64 {
        self.final_eval().mean_return
    }

    /// Median training throughput over all episodes.
    pub fn median_steps_per_sec(&self) -> Option<f64> {
        self.log.median_steps_per_sec()
    }
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Environment, index and fresh agent for a config, all derived from its seed.
pub fn build_agent(config: &ExperimentConfig) -> Result<(AnyEnv, Agent)> {
    let seed = config.seed;
    let env = config.env.build(rng::derive_seed(seed, streams::ENV), &config.base_dir)?;
    let index = ActionIndex::build(
        env.action_set().clone(),
        IndexConfig::for_tier(config.policy.tier),
        rng::derive_seed(seed, streams::INDEX),
    )?;
    let n = index.len();
    let k = config.policy.k.resolve(n)?;
    let target_k = match config.trainer.target_k {
        Some(t) => t.resolve(n)?,
        None => k,
    };
    let trainer_config = trainer_config(config);
    let agent = Agent::new(env.observation_dim(), Arc::new(index), k, target_k, &trainer_config)?
        .with_refinement(config.policy.refinement);
    Ok((env, agent))
}

fn trainer_config(config: &ExperimentConfig) -> crate::ddpg::TrainerConfig {
    let mut t = config.trainer.clone();
    t.seed = config.seed;
    t
}

fn evaluate_frozen(trainer: &Trainer<AnyEnv>, config: &ExperimentConfig, optimal: Option<f64>) -> Result<EvalRow> {
    let agent = trainer.agent();
    let before = [snapshot_bytes(&agent.actor), snapshot_bytes(&agent.critic)];
    let returns = evaluate(
        agent,
        trainer.env(),
        config.eval.episodes,
        config.eval.max_steps,
        rng::derive_seed(config.seed, streams::EVAL ^ trainer.env_steps()),
    )?;
    let expected = exact_greedy_return(agent, trainer.env())?;
    let after = [snapshot_bytes(&agent.actor), snapshot_bytes(&agent.critic)];
    if before != after {
        return Err(Error::invalid("evaluation changed the learned parameters"));
    }
    let mean = if returns.is_empty() {
        0.0
    } else {
        returns.iter().sum::<f64>() / returns.len() as f64
    };
    Ok(EvalRow {
        env_steps: trainer.env_steps(),
        episodes_trained: trainer.log().len(),
        mean_return: mean,
        min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
        max_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        expected_return: expected,
        optimal_return: optimal,
        fraction_of_optimal: optimal.filter(|o| *o != 0.0).map(|o| expected.unwrap_or(mean) / o),
    })
}

/// Expected return of the greedy policy for environments small enough to
/// solve exactly (the recommender).
pub fn exact_greedy_return(agent: &Agent, env: &AnyEnv) -> Result<Option<f64>> {
    let AnyEnv::Recommender(sim) = env else {
        return Ok(None);
    };
    let policy = agent.policy()?;
    let choice = sim
        .action_set()
        .ids()
        .map(|item| Ok(policy.select_action(&sim.observation_of(item))?.chosen))
        .collect::<Result<Vec<_>>>()?;
    sim.policy_return(&choice).map(Some)
}

/// Trains one experiment, evaluating the frozen greedy policy before training
/// and after every `eval.every_steps` environment steps. With `out`, writes
/// the metrics, timing, training log, resolved config and a final checkpoint.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunMetrics> {
    config.validate()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let (env, agent) = build_agent(config)?;
    let optimal = config.env.optimal_return(&env);
    let k = agent.k;
    let mut trainer = Trainer::new(env, agent, trainer_config(config))?;
    let started = Instant::now();
    let mut evaluations = Vec::new();
    let mut timing = Vec::new();
    let mut record = |trainer: &Trainer<AnyEnv>| -> Result<()> {
        evaluations.push(evaluate_frozen(trainer, config, optimal)?);
        timing.push(TimingRow {
            env_steps: trainer.env_steps(),
            wall_seconds: started.elapsed().as_secs_f64(),
            median_steps_per_sec: trainer.log().median_steps_per_sec(),
        });
        Ok(())
    };
    record(&trainer)?;
    while !trainer.finished() {
        let result = trainer.advance(config.eval.every_steps);
        if let Err(e) = result {
            if let Some(dir) = out {
                // keep what was logged before the abort
                write_training_log(trainer.log(), dir)?;
            }
            return Err(e);
        }
        record(&trainer)?;
    }
    let metrics = RunMetrics {
        evaluations,
        timing,
        log: trainer.log().clone(),
        optimal_return: optimal,
        k,
        updates: trainer.updates(),
    };
    if let Some(dir) = out {
        write_csv(dir.join(METRICS_FILE), &metrics.evaluations)?;
        write_csv(dir.join(TIMING_FILE), &metrics.timing)?;
        write_training_log(&metrics.log, dir)?;
        let resolved = config.to_value();
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join(CONFIG_FILE))?), &resolved)?;
        save_checkpoint(
            dir.join(CHECKPOINT_DIR),
            trainer.agent(),
            resolved,
            config.seed,
            trainer.env_steps(),
            trainer.updates(),
        )?;
    }
    Ok(metrics)
}

fn write_training_log(log: &TrainingLog, dir: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(dir.join(TRAINING_LOG_FILE))?);
    log.write_csv(&mut f)?;
    f.flush()?;
    Ok(())
}

pub(crate) fn write_csv<T: Serialize>(path: PathBuf, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(input: R) -> Result<Vec<EvalRow>> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Greedy returns of a saved checkpoint, with the policy's choices for the
/// first episode written to `decisions` when given.
pub fn evaluate_checkpoint(
    dir: &Path,
    episodes: usize,
    max_steps: usize,
    seed: u64,
    decisions: Option<&mut dyn Write>,
) -> Result<Vec<f64>> {
    let manifest = crate::ddpg::read_manifest(dir)?;
    let config = ExperimentConfig::from_value(manifest.config.clone())?;
    let (env, mut agent) = build_agent(&config)?;
    crate::ddpg::load_checkpoint(dir, &mut agent)?;
    if let Some(out) = decisions {
        let policy = agent.policy()?;
        let mut e = env.fork(rng::derive_seed(seed, streams::EVAL));
        let mut w = crate::policy::DecisionWriter::new(out)?;
        let mut state = e.reset();
        for step in 0..max_steps as u64 {
            let d = policy.select_action(&state)?;
            w.write(step, &d)?;
            let s = e.step(d.chosen)?;
            if s.done() {
                break;
            }
            state = s.observation;
        }
        w.finish()?;
    }
    evaluate(&agent, &env, episodes, max_steps, rng::derive_seed(seed, streams::EVAL))
}
