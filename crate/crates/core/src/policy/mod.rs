//! The Wolpertinger policy: actor proto-action, k-nearest candidate retrieval,
//! critic re-ranking.

mod explore;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use explore::{EpsilonSchedule, Exploration};

use crate::index::{squared_distance, ActionId, ActionIndex, Neighbor, Tier};
use crate::nn::Mlp;
use crate::{Error, Result};

/// Candidate count, either absolute or as a fraction of `|A|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KSpec {
    Count(usize),
    Fraction(f64),
}

impl KSpec {
    /// `Fraction(f)` resolves to `max(1, round(f·|A|))`; results are capped at `|A|`.
    pub fn resolve(self, num_actions: usize) -> Result<usize> {
        let k = match self {
            KSpec::Count(0) => return Err(Error::invalid("k must be at least 1")),
            KSpec::Count(k) => k,
            KSpec::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::invalid(format!("k fraction must lie in (0, 1], got {f}")))
            }
            KSpec::Fraction(f) => ((f * num_actions as f64).round() as usize).max(1),
        };
        Ok(k.min(num_actions.max(1)))
    }

    pub fn full() -> Self {
        KSpec::Fraction(1.0)
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Count(k) => write!(f, "{k}"),
            KSpec::Fraction(p) => write!(f, "{}%", (p * 100.0 * 1e9).round() / 1e9),
        }
    }
}

impl FromStr for KSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(pct) = s.strip_suffix('%') {
            let v: f64 = pct
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad percentage {s:?}")))?;
            return Ok(KSpec::Fraction(v / 100.0));
        }
        s.parse::<usize>()
            .map(KSpec::Count)
            .map_err(|_| Error::invalid(format!("bad k {s:?}; use an integer or a percentage like \"5%\"")))
    }
}

impl Serialize for KSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KSpec::Count(k) => s.serialize_u64(*k as u64),
            KSpec::Fraction(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for KSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) => Ok(KSpec::Count(k)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub k: KSpec,
    pub tier: Tier,
    #[serde(default = "default_refinement")]
    pub refinement: Refinement,
}

fn default_refinement() -> Refinement {
    Refinement::On
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            k: KSpec::Count(1),
            tier: Tier::Exact,
            refinement: Refinement::On,
        }
    }
}

/// Everything the policy computed on the way to an action.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDecision {
    pub proto_action: Vec<f64>,
    pub candidates: Vec<Neighbor>,
    /// Critic scores aligned with `candidates`; empty when no re-ranking ran.
    pub q_values: Vec<f64>,
    pub chosen: ActionId,
    pub explored: bool,
}

impl PolicyDecision {
    pub fn chosen_q(&self) -> Option<f64> {
        self.candidates
            .iter()
            .position(|n| n.id == self.chosen)
            .and_then(|i| self.q_values.get(i).copied())
    }
}

/// `f(s)`: the actor's continuous output.
pub fn proto_action(actor: &Mlp, state: &[f64]) -> Result<Vec<f64>> {
    actor.forward(state)
}

/// Critic scores `Q(s, a)` for each listed action, sharing the state part of
/// the first layer across candidates.
pub fn score_actions(critic: &Mlp, index: &ActionIndex, state: &[f64], ids: &[ActionId]) -> Result<Vec<f64>> {
    Error::check_dim(
        "critic input",
        critic.input_size(),
        state.len() + index.actions().dim(),
    )?;
    let mut eval = critic.prefix_evaluator(state)?;
    let actions = index.actions();
    ids.iter()
        .map(|&id| eval.eval(actions.get(id)).map(|q| q[0]))
        .collect()
}

/// Index of the largest score, ties to the smaller action id.
fn argmax_by_id(candidates: &[Neighbor], q: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..candidates.len() {
        let better = q[i] > q[best] || (q[i] == q[best] && candidates[i].id < candidates[best].id);
        if better {
            best = i;
        }
    }
    best
}

/// Borrowed view of a policy: actor, critic, index and resolved `k`.
#[derive(Clone, Copy, Debug)]
pub struct Wolpertinger<'a> {
    pub actor: &'a Mlp,
    pub critic: &'a Mlp,
    pub index: &'a ActionIndex,
    pub k: usize,
    pub refinement: Refinement,
}

impl<'a> Wolpertinger<'a> {
    pub fn new(actor: &'a Mlp, critic: &'a Mlp, index: &'a ActionIndex, k: usize) -> Result<Self> {
        let n = index.actions().dim();
        Error::check_dim("actor output", n, actor.output_size())?;
        Error::check_dim("critic input", actor.input_size() + n, critic.input_size())?;
        Error::check_dim("critic output", 1, critic.output_size())?;
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(Wolpertinger {
            actor,
            critic,
            index,
            k: k.min(index.len()),
            refinement: Refinement::On,
        })
    }

    pub fn with_refinement(mut self, refinement: Refinement) -> Self {
        self.refinement = refinement;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_size()
    }

    /// Greedy action: `argmax_{a ∈ g_k(f(s))} Q(s, a)`.
    pub fn select_action(&self, state: &[f64]) -> Result<PolicyDecision> {
        let proto = proto_action(self.actor, state)?;
        self.decide(state, proto)
    }

    fn decide(&self, state: &[f64], proto: Vec<f64>) -> Result<PolicyDecision> {
        let refine = self.refinement == Refinement::On && self.k > 1;
        let k = if self.refinement == Refinement::On { self.k } else { 1 };
        let candidates = self.index.query(&proto, k)?;
        if !refine {
            return Ok(PolicyDecision {
                proto_action: proto,
                chosen: candidates[0].id,
                candidates,
                q_values: Vec::new(),
                explored: false,
            });
        }
        let ids: Vec<ActionId> = candidates.iter().map(|n| n.id).collect();
        let q_values = score_actions(self.critic, self.index, state, &ids)?;
        let best = argmax_by_id(&candidates, &q_values);
        Ok(PolicyDecision {
            proto_action: proto,
            chosen: candidates[best].id,
            candidates,
            q_values,
            explored: false,
        })
    }

    /// Behavior policy: an ε-jump to a uniformly random action from `support`
    /// (all actions when `None`), otherwise Gaussian noise on the proto-action
    /// before lookup.
    pub fn select_action_explore<R: rand::Rng + ?Sized>(
        &self,
        state: &[f64],
        exploration: &Exploration,
        support: Option<&[ActionId]>,
        rng: &mut R,
    ) -> Result<PolicyDecision> {
        let mut proto = proto_action(self.actor, state)?;
        if let Some(chosen) = exploration.random_jump(support, self.index.len(), rng)? {
            let dist2 = squared_distance(self.index.actions().get(chosen), &proto);
            return Ok(PolicyDecision {
                proto_action: proto,
                candidates: vec![Neighbor { id: chosen, dist2 }],
                q_values: Vec::new(),
                chosen,
                explored: true,
            });
        }
        exploration.perturb(&mut proto, rng);
        self.decide(state, proto)
    }
}

/// CSV writer for per-step decisions: step, proto-action (space separated),
/// candidate count, chosen id, chosen Q (empty when no re-ranking ran).
pub struct DecisionWriter<W: std::io::Write> {
    inner: csv::Writer<W>,
}

impl<W: std::io::Write> DecisionWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(["step", "proto_action", "candidates", "chosen", "chosen_q"])?;
        Ok(DecisionWriter { inner })
    }

    pub fn write(&mut self, step: u64, d: &PolicyDecision) -> Result<()> {
        let proto = d
            .proto_action
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let q = d.chosen_q().map(|q| q.to_string()).unwrap_or_default();
        self.inner.write_record([
            step.to_string(),
            proto,
            d.candidates.len().to_string(),
            d.chosen.to_string(),
            q,
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))
    }
}

/// Brute-force greedy policy over the whole action set, `argmax_a Q(s, a)`.
pub fn full_argmax(critic: &Mlp, index: &ActionIndex, state: &[f64]) -> Result<(ActionId, f64)> {
    let actions = index.actions();
    Error::check_dim("critic input", critic.input_size(), state.len() + actions.dim())?;
    let mut eval = critic.prefix_evaluator(state)?;
    let mut best = (ActionId(0), f64::NEG_INFINITY);
    for id in actions.ids() {
        let q = eval.eval(actions.get(id))?[0];
        if q > best.1 {
            best = (id, q);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests;
