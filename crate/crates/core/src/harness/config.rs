use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ddpg::TrainerConfig;
use crate::env::{AnyEnv, CartPoleParams, CartPoleSwingUp, PuddleMap, PuddleWorld, RecommenderSim, TabularMdp};
use crate::policy::PolicyConfig;
use crate::{Error, Result};

/// Environment selector with its parameters, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Puddle {
        #[serde(default = "default_puddle_size")]
        size: usize,
        #[serde(default = "default_plan_len")]
        plan_len: usize,
        /// ASCII map file; overrides `size`.
        #[serde(default)]
        map: Option<PathBuf>,
        #[serde(default)]
        max_steps: Option<usize>,
    },
    Recommender {
        #[serde(default = "default_items")]
        items: usize,
        #[serde(default = "default_embed_dim")]
        embed_dim: usize,
        #[serde(default = "default_sparsity")]
        sparsity: f64,
        /// Simulator seed, fixed apart from the run seed so every run sees the
        /// same catalog.
        #[serde(default)]
        catalog_seed: u64,
        /// Binary simulator file; overrides the synthetic catalog.
        #[serde(default)]
        file: Option<PathBuf>,
        #[serde(default)]
        max_steps: Option<usize>,
    },
    CartPole {
        #[serde(default = "default_force_levels")]
        actions: usize,
        #[serde(default)]
        params: CartPoleParams,
    },
    TwoState {
        #[serde(default = "default_two_state_steps")]
        max_steps: usize,
    },
    Chain {
        #[serde(default = "default_chain_states")]
        states: usize,
        #[serde(default = "default_chain_steps")]
        max_steps: usize,
    },
}

fn default_puddle_size() -> usize {
    20
}
fn default_plan_len() -> usize {
    8
}
fn default_items() -> usize {
    49
}
fn default_embed_dim() -> usize {
    8
}
fn default_sparsity() -> f64 {
    0.2
}
fn default_force_levels() -> usize {
    1000
}
fn default_two_state_steps() -> usize {
    50
}
fn default_chain_states() -> usize {
    5
}
fn default_chain_steps() -> usize {
    20
}

impl EnvConfig {
    /// Builds the environment; relative file paths resolve against `base`.
    pub fn build(&self, seed: u64, base: &Path) -> Result<AnyEnv> {
        Ok(match self {
            EnvConfig::Puddle {
                size,
                plan_len,
                map,
                max_steps,
            } => {
                let grid = match map {
                    Some(p) => PuddleMap::parse_ascii(&std::fs::read_to_string(base.join(p))?)?,
                    None => PuddleMap::benchmark(*size)?,
                };
                let mut env = PuddleWorld::new(grid, *plan_len)?;
                if let Some(m) = max_steps {
                    env = env.with_max_steps(*m);
                }
                AnyEnv::Puddle(env)
            }
            EnvConfig::Recommender {
                items,
                embed_dim,
                sparsity,
                catalog_seed,
                file,
                max_steps,
            } => {
                let mut sim = match file {
                    Some(p) => RecommenderSim::load(base.join(p), seed)?,
                    None => {
                        use crate::env::Environment;
                        RecommenderSim::synthesize(*items, *embed_dim, *sparsity, *catalog_seed)?.fork(seed)
                    }
                };
                if let Some(m) = max_steps {
                    sim = sim.with_max_steps(*m);
                }
                AnyEnv::Recommender(sim)
            }
            EnvConfig::CartPole { actions, params } => AnyEnv::CartPole(CartPoleSwingUp::new(*params, *actions, seed)?),
            EnvConfig::TwoState { max_steps } => AnyEnv::Tabular(TabularMdp::two_state(*max_steps)),
            EnvConfig::Chain { states, max_steps } => AnyEnv::Tabular(TabularMdp::chain(*states, *max_steps)?),
        })
    }

    /// Best achievable undiscounted return, where an exact solver exists.
    /// The recommender's ignores its step cap.
    pub fn optimal_return(&self, env: &AnyEnv) -> Option<f64> {
        match env {
            AnyEnv::Puddle(p) => Some(p.map().optimal_return()),
            AnyEnv::Recommender(r) => Some(r.optimal_return()),
            AnyEnv::Tabular(t) if matches!(self, EnvConfig::Chain { .. }) => Some(t.optimal_return()),
            _ => None,
        }
    }

    /// Recommender results rest on a synthetic simulator, not real data.
    pub fn synthetic_structure(&self) -> bool {
        matches!(self, EnvConfig::Recommender { file: None, .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Environment steps between greedy evaluations.
    pub every_steps: u64,
    pub episodes: usize,
    /// Step cap per evaluation episode.
    pub max_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            every_steps: 5000,
            episodes: 20,
            max_steps: 1000,
        }
    }
}

/// One experiment as a single JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Directory relative paths in the config resolve against; set by `load`.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies `key=value` overrides (dotted keys).
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg = Self::from_value(value)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        if self.eval.every_steps == 0 {
            return Err(Error::invalid("eval.every_steps must be positive"));
        }
        if self.eval.max_steps == 0 {
            return Err(Error::invalid("eval.max_steps must be positive"));
        }
        match self.policy.k {
            crate::policy::KSpec::Count(0) => Err(Error::invalid("k must be at least 1")),
            crate::policy::KSpec::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::invalid("k fraction must lie in (0, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Sets `a.b.c = value` in a JSON document. The value is parsed as JSON when
/// possible and taken as a string otherwise, so `policy.k=5%` and
/// `trainer.gamma=0.9` both work.
pub fn apply_override(doc: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(format!("bad override key {key:?}")));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::invalid(format!("override {key:?} goes through a non-object")))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::invalid(format!("override {key:?} goes through a non-object")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Environment;
    use crate::index::Tier;
    use crate::policy::KSpec;

    #[test]
    fn minimal_config_defaults() {
        let c = ExperimentConfig::from_json(r#"{"env": {"kind": "puddle"}}"#).unwrap();
        assert_eq!(
            c.env,
            EnvConfig::Puddle {
                size: 20,
                plan_len: 8,
                map: None,
                max_steps: None
            }
        );
        assert_eq!(c.eval.every_steps, 5000);
        assert_eq!(c.eval.episodes, 20);
    }

    #[test]
    fn overrides() {
        let mut v = serde_json::json!({"env": {"kind": "puddle"}});
        apply_override(&mut v, "policy.k=5%").unwrap();
        apply_override(&mut v, "policy.tier=slow").unwrap();
        apply_override(&mut v, "trainer.gamma=0.9").unwrap();
        apply_override(&mut v, "env.plan_len=4").unwrap();
        let c = ExperimentConfig::from_value(v.clone()).unwrap();
        assert_eq!(c.policy.k, KSpec::Fraction(0.05));
        assert_eq!(c.policy.tier, Tier::Slow);
        assert_eq!(c.trainer.gamma, 0.9);
        assert!(apply_override(&mut v, "novalue").is_err());
        assert!(apply_override(&mut v, "trainer.gamma.x=1").is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"env": {"kind": "puddle"}, "trainer": {"tau": 0}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"env": {"kind": "lava"}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"env": {"kind": "puddle"}, "trainer": {"gama": 0.9}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"env": {"kind": "puddle", "sise": 20}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"env": {"kind": "puddle"}, "policy": {"k": 0, "tier": "exact"}}"#).is_err());
    }

    #[test]
    fn builds_each_environment() {
        let base = Path::new(".");
        for text in [
            r#"{"kind": "puddle", "size": 20, "plan_len": 4}"#,
            r#"{"kind": "recommender", "items": 30}"#,
            r#"{"kind": "cart_pole", "actions": 11}"#,
            r#"{"kind": "two_state"}"#,
            r#"{"kind": "chain"}"#,
        ] {
            let cfg: EnvConfig = serde_json::from_str(text).unwrap();
            let env = cfg.build(1, base).unwrap();
            assert!(env.observation_dim() > 0);
        }
        let chain: EnvConfig = serde_json::from_str(r#"{"kind": "chain"}"#).unwrap();
        assert_eq!(chain.optimal_return(&chain.build(0, base).unwrap()), Some(7.0));
    }
}
